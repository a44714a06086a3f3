// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gsmind/errors.hpp"
#include "gsmind/frame.hpp"
#include "gsmind/gaussian_map.hpp"

namespace gsmind {

struct AssociationConfig {
    double w_geo = 0.4;
    double w_iou = 0.4;
    double w_sem = 0.2;
    double tau = 0.4;
};

struct CandidateScore {
    InstanceId id = kNoInstance;
    double s_geo = 0.0;
    double s_iou = 0.0;
    double s_sem = 0.0;
    double score = 0.0;
};

struct AssociationOutcome {
    enum class Kind { Matched, New, Failed };
    Kind kind = Kind::New;
    InstanceId id = kNoInstance; // matched id, or the id a spawn will receive
    std::uint32_t label = 0;
    CandidateScore best;
    std::vector<CandidateScore> candidates; // ascending id
    std::vector<VoxelKey> voxels;           // V_i^t
    std::optional<Errc> error;

    bool matched() const { return kind == Kind::Matched; }
};

/// Cosine similarity; throws ZeroFeature for a zero vector.
double sem_similarity(std::span<const float> f, std::span<const float> F);
/// |a & b| / |a | b|, 0 when the union is empty.
double mask_iou(const Mask &a, const Mask &b);
double joint_score(double s_geo, double s_iou, double s_sem, const AssociationConfig &cfg = {});

/// Scores every voxel candidate and picks the best (ties to the lower id) if it reaches tau.
AssociationOutcome associate(const GaussianMap &map, const InstanceObservation &obs, const DepthImage &depth,
                             const Pose &pose, const AssociationConfig &cfg = {});

/// Weighted feature update with w = (|V| / V-hat) S, then hit recording on `voxels`.
void fuse(GaussianMap &map, const InstanceObservation &obs, InstanceId id, double score,
          std::span<const VoxelKey> voxels, const Pose &pose);

/// New record with F = f, W = 1; records hits and logs the view. Returns the new id.
InstanceId spawn_instance(GaussianMap &map, const InstanceObservation &obs, std::span<const VoxelKey> voxels,
                          const Pose &pose);

/// Associates observations in descending mask-area order, then fuses or spawns each.
std::vector<AssociationOutcome> process_frame(GaussianMap &map, const FrameObservation &frame,
                                              const AssociationConfig &cfg = {});

} // namespace gsmind
