// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "gsmind/geometry.hpp"
#include "gsmind/image.hpp"
#include "gsmind/render.hpp"
#include "gsmind/voxel_map.hpp"

namespace gsmind {

inline constexpr std::uint32_t kDefaultFeatureDim = 512;

struct ObservingView {
    std::uint32_t frame_id = 0;
    Pose pose;
    std::uint32_t mask_pixels = 0;

    bool operator==(const ObservingView &) const = default;
};

/// Persistent map instance. Owned Gaussians are those whose instance_id equals `id`;
/// the voxel count comes from the voxel map's slot ownership.
struct InstanceRecord {
    InstanceId id = 0;
    std::vector<float> feature;
    double weight = 0.0;
    std::vector<ObservingView> views;

    bool operator==(const InstanceRecord &) const = default;
};

struct GaussianMap {
    Intrinsics intrinsics;
    std::uint32_t feature_dim = kDefaultFeatureDim;
    std::vector<GaussianSplat> gaussians;
    VoxelMap voxels;
    std::map<InstanceId, InstanceRecord> instances;
    InstanceId next_instance_id = 0;

    bool has_instance(InstanceId id) const { return instances.count(id) != 0; }
    /// Throws UnknownInstance.
    const InstanceRecord &instance(InstanceId id) const;
    InstanceRecord &instance(InstanceId id);

    std::vector<std::uint32_t> owned_gaussians(InstanceId id) const;
    std::vector<GaussianSplat> instance_gaussians(InstanceId id) const;
    std::size_t voxel_count(InstanceId id) const { return voxels.instance_voxel_count(id); }

    /// Adds a Gaussian and registers it under `key`; returns its index.
    std::uint32_t add_gaussian(const GaussianSplat &g, const VoxelKey &key);
    /// Compacts away flagged Gaussians and remaps the voxel index.
    void erase_gaussians(const std::vector<bool> &remove);
    /// Deletes the record, its Gaussians, and its voxel slots.
    void remove_instance(InstanceId id);

    bool operator==(const GaussianMap &other) const;
};

/// Renders only the instance's Gaussians; pixels with alpha >= threshold.
Mask render_instance_mask(const GaussianMap &map, InstanceId id, const Pose &pose, const Intrinsics &K,
                          double threshold = kMaskAlphaThreshold);

} // namespace gsmind
