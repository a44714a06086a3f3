// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "gsmind/geometry.hpp"
#include "gsmind/image.hpp"

namespace gsmind {

inline constexpr double kDefaultVoxelResolution = 0.02;
inline constexpr double kDefaultMaxDepth = 8.0;
inline constexpr int kVoxelSlots = 3;

struct VoxelKey {
    std::int32_t ix = 0;
    std::int32_t iy = 0;
    std::int32_t iz = 0;

    auto operator<=>(const VoxelKey &) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey &k) const noexcept {
        std::uint64_t h = static_cast<std::uint32_t>(k.ix) * 73856093ULL;
        h ^= static_cast<std::uint32_t>(k.iy) * 19349663ULL;
        h ^= static_cast<std::uint32_t>(k.iz) * 83492791ULL;
        return static_cast<std::size_t>(h);
    }
};

struct VoxelSlot {
    InstanceId id = kNoInstance;
    std::uint32_t count = 0;

    bool empty() const { return id == kNoInstance; }
    bool operator==(const VoxelSlot &) const = default;
};

/// Candidate slots are kept packed at the front; empty slots have id kNoInstance.
struct VoxelCell {
    std::array<VoxelSlot, kVoxelSlots> slots{};
    std::uint32_t total = 0;
    std::vector<std::uint32_t> gaussian_ids;

    const VoxelSlot *find(InstanceId id) const;
    bool operator==(const VoxelCell &) const = default;
};

/// P_k(v) = c_k / c, 0 when absent or c = 0.
double assignment_probability(const VoxelCell &cell, InstanceId id);

/// A voxel key plus the first pixel (raster order) that hit it.
struct VoxelHit {
    VoxelKey key;
    int x = 0;
    int y = 0;
};

/// Sparse hashed grid of observed cells. Table membership means "observed".
class VoxelMap {
public:
    explicit VoxelMap(double resolution = kDefaultVoxelResolution, double max_depth = kDefaultMaxDepth);

    double resolution() const noexcept { return resolution_; }
    double max_depth() const noexcept { return max_depth_; }
    std::size_t size() const noexcept { return cells_.size(); }

    VoxelKey key_of(const Vec3 &p) const;
    Vec3 center_of(const VoxelKey &k) const;

    /// Marks every valid-depth voxel observed and returns the ones seen for the first time.
    std::vector<VoxelHit> integrate_frame(const DepthImage &depth, const Pose &pose, const Intrinsics &K);
    /// Same result as integrate_frame would report, without mutating the map.
    std::vector<VoxelHit> new_voxels_in_frustum(const DepthImage &depth, const Pose &pose,
                                                const Intrinsics &K) const;

    /// Inserts an empty observed cell if absent.
    void mark_observed(const VoxelKey &key) { cells_.try_emplace(key); }

    /// Sorted, de-duplicated voxel keys under a mask (valid depth only).
    std::vector<VoxelKey> backproject_mask(const Mask &mask, const DepthImage &depth, const Pose &pose,
                                           const Intrinsics &K) const;

    double assignment_probability(const VoxelKey &key, InstanceId id) const;
    std::set<InstanceId> candidate_instances(std::span<const VoxelKey> voxels) const;
    /// Mean assignment probability of `id` over `voxels`; throws EmptyObservation on an empty set.
    double geo_similarity(std::span<const VoxelKey> voxels, InstanceId id) const;

    /// Hit statistics update: increment, insert into a free slot, or evict the weakest slot.
    void record_hits(std::span<const VoxelKey> voxels, InstanceId id);

    /// Registers gaussian_ids[i] under keys[i]; throws UnknownVoxel for unobserved keys.
    void register_gaussians(std::span<const VoxelKey> keys, std::span<const std::uint32_t> gaussian_ids);
    std::vector<std::uint32_t> gaussians_for(std::span<const VoxelKey> keys) const;

    /// Deletes every slot of `id` (subtracting its counts) and drops the given Gaussian ids.
    void remove_instance(InstanceId id, std::span<const std::uint32_t> owned_gaussians = {});

    /// Rewrites Gaussian ids through old->new; entries mapped to -1 are dropped.
    void remap_gaussians(std::span<const std::int64_t> old_to_new);

    /// Number of cells holding `id` in a slot (V-hat).
    std::size_t instance_voxel_count(InstanceId id) const;

    const VoxelCell *find(const VoxelKey &key) const;
    bool contains(const VoxelKey &key) const { return cells_.count(key) != 0; }
    std::vector<VoxelKey> sorted_keys() const;
    const std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash> &cells() const noexcept { return cells_; }

    /// Inserts a fully formed cell (deserialization); recomputes slot ownership counts.
    void insert_cell(const VoxelKey &key, VoxelCell cell);

    bool operator==(const VoxelMap &other) const;

private:
    template <typename Fn>
    void for_each_valid_pixel(const DepthImage &depth, const Pose &pose, const Intrinsics &K, Fn &&fn) const;

    double resolution_;
    double max_depth_;
    std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash> cells_;
    std::unordered_map<InstanceId, std::size_t> instance_voxels_;
};

} // namespace gsmind
