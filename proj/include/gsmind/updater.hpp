// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "gsmind/frame.hpp"
#include "gsmind/gaussian_map.hpp"
#include "gsmind/instance_engine.hpp"
#include "gsmind/optimizer.hpp"

namespace gsmind {

/// Source of coarse camera poses for relocalization.
class PoseProvider {
public:
    virtual ~PoseProvider() = default;
    virtual Pose coarse_pose(const FrameObservation &frame) = 0;
};

/// Poses keyed by frame id (typically read from pose files).
class FilePoseProvider : public PoseProvider {
public:
    explicit FilePoseProvider(std::map<std::uint32_t, Pose> poses) : poses_(std::move(poses)) {}
    Pose coarse_pose(const FrameObservation &frame) override;

private:
    std::map<std::uint32_t, Pose> poses_;
};

/// Frame pose perturbed by a translation of fixed length and a rotation of fixed angle,
/// along seeded random directions.
class MockPoseProvider : public PoseProvider {
public:
    MockPoseProvider(double translation_m, double rotation_rad, std::uint64_t seed)
        : translation_(translation_m), rotation_(rotation_rad), rng_(seed) {}
    Pose coarse_pose(const FrameObservation &frame) override;

private:
    double translation_;
    double rotation_;
    std::mt19937_64 rng_;
};

/// Perturbs `pose` in its local frame by exact magnitudes along random unit directions.
Pose perturb_pose(const Pose &pose, double translation_m, double rotation_rad, std::mt19937_64 &rng);

/// Image-crop embedding used for the semantic change term.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<float> embed(const ColorImage &image, const Mask &mask) const = 0;
};

/// 4x4x4 soft (trilinear) color histogram over masked pixels.
class HistogramEmbedder : public EmbeddingProvider {
public:
    std::vector<float> embed(const ColorImage &image, const Mask &mask) const override;
};

struct UpdateConfig {
    int reloc_iterations = 200;
    double reloc_lr_translation = 2e-3;
    double reloc_lr_rotation = 1e-3;
    double reloc_lambda_depth = 0.5; // lambda9
    double silhouette_threshold = 0.98; // lambda8
    double visible_fraction = 0.5;
    double depth_tolerance = 0.05; // tau_d
    double w_geo = 0.2;  // lambda10
    double w_app = 0.4;  // lambda11
    double w_sem = 0.4;  // lambda12
    double change_threshold = 0.35; // delta_change
    double reobservation_iou = 0.5;
    int dilation_px = 5;
    int refine_iterations = 200;
};

struct RefineResult {
    Pose pose;
    double loss = 0.0;
    double initial_loss = 0.0;
    int best_iteration = 0;
};

/// Minimizes the silhouette-masked L1 color + lambda9 L1 depth residual over a 6-dof
/// perturbation and returns the best iterate. The map is read-only.
RefineResult refine_pose(const GaussianMap &map, const FrameObservation &frame, const Pose &coarse,
                         const UpdateConfig &cfg = {});

/// Instances whose owned Gaussians are more than `fraction` inside the view frustum.
std::vector<InstanceId> visible_instances(const GaussianMap &map, const Pose &pose, const Intrinsics &K,
                                          double fraction = 0.5);

struct ChangeScores {
    InstanceId id = kNoInstance;
    double s_geo = 0.0;
    double s_app = 0.0;
    double s_sem = 0.0;
    double s_change = 0.0;

    bool operator==(const ChangeScores &) const = default;
};

/// Weighted change similarity of one instance against an observation. `full` is the
/// render of the whole map at `pose`. Throws InsufficientEvidence when no pixel is valid.
ChangeScores change_scores(const GaussianMap &map, InstanceId id, const FrameObservation &frame, const Pose &pose,
                           const RenderOutput &full, const EmbeddingProvider &embedder,
                           const UpdateConfig &cfg = {});

struct ChangeDetection {
    std::vector<InstanceId> removed;
    std::vector<ChangeScores> scores;
    std::vector<InstanceId> skipped; // insufficient evidence
};

ChangeDetection detect_changes(const GaussianMap &map, const FrameObservation &frame, const Pose &pose,
                               const EmbeddingProvider &embedder, const UpdateConfig &cfg = {});

/// Deletes instances and returns the union of their rendered masks at `pose` (M_remove).
Mask remove_instances(GaussianMap &map, std::span<const InstanceId> ids, const Pose &pose);

struct ResidualResult {
    std::vector<InstanceId> spawned;
    Mask new_mask;      // M_new
    std::size_t first_new_gaussian = 0;
};

/// Associates the frame's observations against the pruned map; unmatched observations that
/// do not overlap an existing instance render (IoU > gate) become new instances with Gaussians.
/// Matched observations are left alone. Other newly observed voxels are densified only when
/// their seeding pixel lies in `region` (dilated) or in M_new.
ResidualResult residual_detect(GaussianMap &map, const FrameObservation &frame, const Pose &pose,
                               const Mask *region = nullptr, const AssociationConfig &assoc = {},
                               const UpdateConfig &cfg = {}, const OptimizerConfig &opt = {});

Mask dilate(const Mask &m, int radius);

/// Optimizes only Gaussians whose projected center falls in the dilated mask plus those at
/// index >= first_new; everything else stays bitwise identical. Returns the loss history.
std::vector<double> masked_refine(GaussianMap &map, const Mask &update_mask, const Keyframe &kf, int iterations,
                                  std::size_t first_new, const OptimizerConfig &opt = {},
                                  const UpdateConfig &cfg = {});

struct ChangeReport {
    std::uint32_t frame_id = 0;
    Pose coarse_pose;
    Pose refined_pose;
    std::vector<InstanceId> removed;
    std::vector<InstanceId> added;
    std::vector<ChangeScores> scores;
    Mask update_mask;

    bool operator==(const ChangeReport &) const = default;
};

/// refine_pose -> detect_changes -> remove_instances -> residual_detect -> masked_refine.
/// Scene-graph synchronization is applied by the caller with the returned report.
ChangeReport run_update(GaussianMap &map, const FrameObservation &frame, PoseProvider &provider,
                        const EmbeddingProvider &embedder, const UpdateConfig &cfg = {},
                        const AssociationConfig &assoc = {}, const OptimizerConfig &opt = {});

} // namespace gsmind
