// SPDX-License-Identifier: Apache-2.0
#include "gsmind/gaussian_map.hpp"

#include "gsmind/frame.hpp"

namespace gsmind {

Mask label_mask(const LabelImage &labels, std::uint32_t label) {
    Mask m(labels.width(), labels.height(), 1, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) m.data()[i] = labels.data()[i] == label;
    return m;
}

const InstanceRecord &GaussianMap::instance(InstanceId id) const {
    auto it = instances.find(id);
    if (it == instances.end()) fail(Errc::UnknownInstance, "unknown instance " + std::to_string(id));
    return it->second;
}

InstanceRecord &GaussianMap::instance(InstanceId id) {
    auto it = instances.find(id);
    if (it == instances.end()) fail(Errc::UnknownInstance, "unknown instance " + std::to_string(id));
    return it->second;
}

std::vector<std::uint32_t> GaussianMap::owned_gaussians(InstanceId id) const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        if (gaussians[i].instance_id == id) out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
}

std::vector<GaussianSplat> GaussianMap::instance_gaussians(InstanceId id) const {
    std::vector<GaussianSplat> out;
    for (const auto &g : gaussians) {
        if (g.instance_id == id) out.push_back(g);
    }
    return out;
}

std::uint32_t GaussianMap::add_gaussian(const GaussianSplat &g, const VoxelKey &key) {
    const auto index = static_cast<std::uint32_t>(gaussians.size());
    voxels.register_gaussians(std::span(&key, 1), std::span(&index, 1));
    gaussians.push_back(g);
    return index;
}

void GaussianMap::erase_gaussians(const std::vector<bool> &remove) {
    if (remove.size() != gaussians.size()) fail(Errc::InvalidArgument, "erase mask size mismatch");
    std::vector<std::int64_t> remap(gaussians.size(), -1);
    std::vector<GaussianSplat> kept;
    kept.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        if (remove[i]) continue;
        remap[i] = static_cast<std::int64_t>(kept.size());
        kept.push_back(gaussians[i]);
    }
    if (kept.size() == gaussians.size()) return;
    gaussians = std::move(kept);
    voxels.remap_gaussians(remap);
}

void GaussianMap::remove_instance(InstanceId id) {
    if (!has_instance(id)) fail(Errc::UnknownInstance, "unknown instance " + std::to_string(id));
    voxels.remove_instance(id);
    std::vector<bool> remove(gaussians.size(), false);
    for (std::size_t i = 0; i < gaussians.size(); ++i) remove[i] = gaussians[i].instance_id == id;
    erase_gaussians(remove);
    instances.erase(id);
}

bool GaussianMap::operator==(const GaussianMap &other) const {
    return intrinsics == other.intrinsics && feature_dim == other.feature_dim && gaussians == other.gaussians &&
           voxels == other.voxels && instances == other.instances && next_instance_id == other.next_instance_id;
}

Mask render_instance_mask(const GaussianMap &map, InstanceId id, const Pose &pose, const Intrinsics &K,
                          double threshold) {
    map.instance(id);
    const auto subset = map.instance_gaussians(id);
    RenderSettings settings;
    settings.mask_alpha_threshold = threshold;
    return alpha_mask(render_frame(subset, pose, K, settings), threshold);
}

} // namespace gsmind
