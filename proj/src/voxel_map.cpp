// SPDX-License-Identifier: Apache-2.0
#include "gsmind/voxel_map.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gsmind {

const VoxelSlot *VoxelCell::find(InstanceId id) const {
    for (const auto &s : slots) {
        if (!s.empty() && s.id == id) return &s;
    }
    return nullptr;
}

double assignment_probability(const VoxelCell &cell, InstanceId id) {
    if (cell.total == 0) return 0.0;
    const VoxelSlot *s = cell.find(id);
    return s ? static_cast<double>(s->count) / cell.total : 0.0;
}

VoxelMap::VoxelMap(double resolution, double max_depth) : resolution_(resolution), max_depth_(max_depth) {
    if (!(resolution > 0.0)) fail(Errc::InvalidArgument, "voxel resolution must be positive");
}

VoxelKey VoxelMap::key_of(const Vec3 &p) const {
    return {static_cast<std::int32_t>(std::floor(p.x() / resolution_)),
            static_cast<std::int32_t>(std::floor(p.y() / resolution_)),
            static_cast<std::int32_t>(std::floor(p.z() / resolution_))};
}

Vec3 VoxelMap::center_of(const VoxelKey &k) const {
    return {(k.ix + 0.5) * resolution_, (k.iy + 0.5) * resolution_, (k.iz + 0.5) * resolution_};
}

template <typename Fn>
void VoxelMap::for_each_valid_pixel(const DepthImage &depth, const Pose &pose, const Intrinsics &K,
                                    Fn &&fn) const {
    if (!depth.same_shape(K.width, K.height, 1)) fail(Errc::ShapeMismatch, "depth does not match intrinsics");
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            const double d = depth(x, y);
            if (!(d > 0.0) || d > max_depth_) continue;
            fn(x, y, key_of(pose * (d * pixel_ray(x, y, K))));
        }
    }
}

std::vector<VoxelHit> VoxelMap::integrate_frame(const DepthImage &depth, const Pose &pose,
                                                const Intrinsics &K) {
    std::vector<VoxelHit> fresh;
    for_each_valid_pixel(depth, pose, K, [&](int x, int y, const VoxelKey &key) {
        auto [it, inserted] = cells_.try_emplace(key);
        if (inserted) fresh.push_back({key, x, y});
    });
    return fresh;
}

std::vector<VoxelHit> VoxelMap::new_voxels_in_frustum(const DepthImage &depth, const Pose &pose,
                                                      const Intrinsics &K) const {
    std::vector<VoxelHit> fresh;
    std::unordered_set<VoxelKey, VoxelKeyHash> seen;
    for_each_valid_pixel(depth, pose, K, [&](int x, int y, const VoxelKey &key) {
        if (cells_.count(key)) return;
        if (seen.insert(key).second) fresh.push_back({key, x, y});
    });
    return fresh;
}

std::vector<VoxelKey> VoxelMap::backproject_mask(const Mask &mask, const DepthImage &depth, const Pose &pose,
                                                 const Intrinsics &K) const {
    require_same_extent(mask, depth, "mask and depth shapes differ");
    if (!depth.same_shape(K.width, K.height, 1)) fail(Errc::ShapeMismatch, "depth does not match intrinsics");
    std::vector<VoxelKey> keys;
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            if (!mask(x, y)) continue;
            const double d = depth(x, y);
            if (!(d > 0.0) || d > max_depth_) continue;
            keys.push_back(key_of(pose * (d * pixel_ray(x, y, K))));
        }
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

double VoxelMap::assignment_probability(const VoxelKey &key, InstanceId id) const {
    const VoxelCell *c = find(key);
    return c ? gsmind::assignment_probability(*c, id) : 0.0;
}

std::set<InstanceId> VoxelMap::candidate_instances(std::span<const VoxelKey> voxels) const {
    std::set<InstanceId> out;
    for (const auto &k : voxels) {
        const VoxelCell *c = find(k);
        if (!c) continue;
        for (const auto &s : c->slots) {
            if (!s.empty()) out.insert(s.id);
        }
    }
    return out;
}

double VoxelMap::geo_similarity(std::span<const VoxelKey> voxels, InstanceId id) const {
    if (voxels.empty()) fail(Errc::EmptyObservation, "geo similarity over an empty voxel set");
    double sum = 0.0;
    for (const auto &k : voxels) sum += assignment_probability(k, id);
    return sum / static_cast<double>(voxels.size());
}

void VoxelMap::record_hits(std::span<const VoxelKey> voxels, InstanceId id) {
    for (const auto &k : voxels) {
        VoxelCell &cell = cells_[k];
        cell.total += 1;
        auto hit = std::find_if(cell.slots.begin(), cell.slots.end(),
                                [&](const VoxelSlot &s) { return !s.empty() && s.id == id; });
        if (hit != cell.slots.end()) {
            hit->count += 1;
            continue;
        }
        auto free = std::find_if(cell.slots.begin(), cell.slots.end(),
                                 [](const VoxelSlot &s) { return s.empty(); });
        if (free == cell.slots.end()) {
            // full: evict the first minimum-count slot
            free = std::min_element(cell.slots.begin(), cell.slots.end(),
                                    [](const VoxelSlot &a, const VoxelSlot &b) { return a.count < b.count; });
            if (--instance_voxels_[free->id] == 0) instance_voxels_.erase(free->id);
        }
        *free = VoxelSlot{id, 1};
        ++instance_voxels_[id];
    }
}

void VoxelMap::register_gaussians(std::span<const VoxelKey> keys, std::span<const std::uint32_t> gaussian_ids) {
    if (keys.size() != gaussian_ids.size()) fail(Errc::InvalidArgument, "keys and ids differ in length");
    for (const auto &k : keys) {
        if (!cells_.count(k)) fail(Errc::UnknownVoxel, "voxel not observed");
    }
    for (std::size_t i = 0; i < keys.size(); ++i) cells_[keys[i]].gaussian_ids.push_back(gaussian_ids[i]);
}

std::vector<std::uint32_t> VoxelMap::gaussians_for(std::span<const VoxelKey> keys) const {
    std::vector<std::uint32_t> out;
    for (const auto &k : keys) {
        if (const VoxelCell *c = find(k)) out.insert(out.end(), c->gaussian_ids.begin(), c->gaussian_ids.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void VoxelMap::remove_instance(InstanceId id, std::span<const std::uint32_t> owned_gaussians) {
    std::unordered_set<std::uint32_t> drop(owned_gaussians.begin(), owned_gaussians.end());
    for (auto &[key, cell] : cells_) {
        bool touched = false;
        for (auto &s : cell.slots) {
            if (!s.empty() && s.id == id) {
                cell.total -= s.count;
                s = VoxelSlot{};
                touched = true;
            }
        }
        if (touched) {
            std::stable_partition(cell.slots.begin(), cell.slots.end(),
                                  [](const VoxelSlot &s) { return !s.empty(); });
        }
        if (!drop.empty()) {
            std::erase_if(cell.gaussian_ids, [&](std::uint32_t g) { return drop.count(g) != 0; });
        }
    }
    instance_voxels_.erase(id);
}

void VoxelMap::remap_gaussians(std::span<const std::int64_t> old_to_new) {
    for (auto &[key, cell] : cells_) {
        std::vector<std::uint32_t> kept;
        kept.reserve(cell.gaussian_ids.size());
        for (std::uint32_t g : cell.gaussian_ids) {
            if (g < old_to_new.size() && old_to_new[g] >= 0) kept.push_back(static_cast<std::uint32_t>(old_to_new[g]));
        }
        cell.gaussian_ids = std::move(kept);
    }
}

std::size_t VoxelMap::instance_voxel_count(InstanceId id) const {
    auto it = instance_voxels_.find(id);
    return it == instance_voxels_.end() ? 0 : it->second;
}

const VoxelCell *VoxelMap::find(const VoxelKey &key) const {
    auto it = cells_.find(key);
    return it == cells_.end() ? nullptr : &it->second;
}

std::vector<VoxelKey> VoxelMap::sorted_keys() const {
    std::vector<VoxelKey> keys;
    keys.reserve(cells_.size());
    for (const auto &[k, c] : cells_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
}

void VoxelMap::insert_cell(const VoxelKey &key, VoxelCell cell) {
    auto it = cells_.find(key);
    if (it != cells_.end()) {
        for (const auto &s : it->second.slots) {
            if (!s.empty() && --instance_voxels_[s.id] == 0) instance_voxels_.erase(s.id);
        }
    }
    for (const auto &s : cell.slots) {
        if (!s.empty()) ++instance_voxels_[s.id];
    }
    cells_[key] = std::move(cell);
}

bool VoxelMap::operator==(const VoxelMap &other) const {
    return resolution_ == other.resolution_ && max_depth_ == other.max_depth_ && cells_ == other.cells_;
}

} // namespace gsmind
