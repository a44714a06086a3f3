// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gsmind/gaussian_map.hpp"
#include "gsmind/synth.hpp"

namespace gsmind {

struct SegmentationMetrics {
    double macc = 0.0;
    double miou = 0.0;
    double fmiou = 0.0;
    std::vector<std::string> classes;
    std::vector<std::vector<std::size_t>> confusion; // [truth][predicted]
};

/// Metrics from a square confusion matrix; averages run over classes present in the truth.
SegmentationMetrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion,
                                           std::vector<std::string> classes);

/// Truth object id (0 = floor/background) of the surface nearest to `p`.
std::uint32_t nearest_surface_label(const SceneSpec &spec, const Vec3 &p);

/// Category predicted for an instance: argmax cosine against the category text table.
std::string predicted_category(const GaussianMap &map, InstanceId id, const SceneSpec &spec);

/// Per-Gaussian predicted category vs the nearest truth surface. Classes: "background" then
/// the spec's category table.
SegmentationMetrics eval_segmentation(const GaussianMap &map, const SceneSpec &spec);

struct PhotometricMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
    std::vector<double> per_view_psnr;
};

/// 10 log10(1 / MSE) on unit range, capped at 99 dB.
double psnr(const ColorImage &a, const ColorImage &b);
PhotometricMetrics eval_photometric(const GaussianMap &map, std::span<const Pose> poses,
                                    std::span<const ColorImage> truth);

/// Fraction of queries whose predicted box reaches each IoU threshold (one answer per query).
std::vector<double> eval_grounding(const std::vector<std::optional<Aabb>> &predicted, const std::vector<Aabb> &truth,
                                   const std::vector<double> &thresholds = {0.1, 0.25, 0.5});

struct UpdateTrial {
    enum class Kind { Removal, Addition, Movement };
    Kind kind = Kind::Removal;
    bool removed = false; // the edited object's old instance left the map
    bool added = false;   // a new instance overlaps the truth box with IoU >= 0.25
};

bool trial_success(const UpdateTrial &t);
double eval_updates(const std::vector<UpdateTrial> &trials);

/// Axis-aligned box of an instance's Gaussian centers; nullopt when it owns none.
std::optional<Aabb> instance_bounds(const GaussianMap &map, InstanceId id);

/// Majority truth label per instance (by nearest surface of its Gaussians).
std::map<InstanceId, std::uint32_t> instance_truth_labels(const GaussianMap &map, const SceneSpec &spec);

struct RecoveryReport {
    bool exact = false; // one instance per object, no duplicates, no merges
    std::size_t objects = 0;
    std::size_t instances = 0;
    std::map<InstanceId, std::uint32_t> assignment;
};

RecoveryReport instance_recovery(const GaussianMap &map, const SceneSpec &spec, double min_purity = 0.5);

} // namespace gsmind
