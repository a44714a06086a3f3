// SPDX-License-Identifier: Apache-2.0
#include "gsmind/pipeline.hpp"

#include <algorithm>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace gsmind {

double camera_extent(std::span<const FrameObservation> frames) {
    if (frames.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto &f : frames) mean += f.pose.translation;
    mean /= static_cast<double>(frames.size());
    double r = 0.0;
    for (const auto &f : frames) r = std::max(r, (f.pose.translation - mean).norm());
    return std::max(1.0, 1.1 * r);
}

namespace {

Keyframe to_keyframe(const FrameObservation &f) { return {f.frame_id, f.pose, f.color, f.depth}; }

} // namespace

std::vector<Keyframe> keyframes_of(const Bundle &bundle, const OptimizerConfig &cfg) {
    KeyframeSelector sel(cfg);
    std::vector<Keyframe> out;
    for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
        if (sel.consider(i, bundle.frames[i].pose)) out.push_back(to_keyframe(bundle.frames[i]));
    }
    return out;
}

GaussianMap build_map(const Bundle &bundle, const MappingConfig &cfg, MappingStats *stats) {
    GaussianMap map;
    map.intrinsics = bundle.meta.intrinsics;
    map.feature_dim = bundle.meta.feature_dim;
    OptimizerConfig opt = cfg.opt;
    opt.scene_extent = camera_extent(bundle.frames);
    GaussianOptimizer optimizer(opt);
    KeyframeSelector selector(opt);
    std::vector<Keyframe> keyframes;
    MappingStats st;

    for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
        const FrameObservation &frame = bundle.frames[i];
        const auto hits = map.voxels.integrate_frame(frame.depth, frame.pose, map.intrinsics);
        const auto outcomes = process_frame(map, frame, cfg.assoc);
        std::unordered_map<std::uint32_t, InstanceId> label_to_instance;
        for (const auto &o : outcomes) {
            if (o.kind == AssociationOutcome::Kind::Failed) {
                ++st.failed;
                continue;
            }
            (o.matched() ? st.matched : st.spawned) += 1;
            label_to_instance[o.label] = o.id;
        }
        densify(map, hits, frame, label_to_instance, opt);
        ++st.frames;
        if (selector.consider(i, frame.pose)) {
            keyframes.push_back(to_keyframe(frame));
            const auto window = recent_window<Keyframe>(keyframes, opt.window_size);
            const std::size_t before = map.gaussians.size();
            optimizer.optimize(map, window, opt.iterations_per_keyframe);
            st.pruned += before - map.gaussians.size();
        }
        spdlog::debug("frame {}: {} gaussians, {} instances", frame.frame_id, map.gaussians.size(),
                      map.instances.size());
    }
    st.keyframes = keyframes.size();
    if (!keyframes.empty() && opt.iterations > 0) {
        const std::size_t before = map.gaussians.size();
        st.final_losses = optimizer.optimize(map, keyframes, opt.iterations);
        st.pruned += before - map.gaussians.size();
    }
    if (stats) *stats = std::move(st);
    return map;
}

} // namespace gsmind
