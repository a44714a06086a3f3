// SPDX-License-Identifier: Apache-2.0
#include "gsmind/optimizer.hpp"

#include <cmath>

namespace gsmind {

std::vector<GaussianSplat> densify(GaussianMap &map, std::span<const VoxelHit> new_voxels,
                                   const FrameObservation &frame,
                                   const std::unordered_map<std::uint32_t, InstanceId> &label_to_instance,
                                   const OptimizerConfig &cfg) {
    std::vector<GaussianSplat> added;
    added.reserve(new_voxels.size());
    const float s0 = static_cast<float>(std::log(map.voxels.resolution() * cfg.initial_scale_factor));
    for (const VoxelHit &hit : new_voxels) {
        GaussianSplat g;
        g.center = map.voxels.center_of(hit.key).cast<float>();
        if (!frame.color.empty()) {
            g.color = Eigen::Vector3f(static_cast<float>(frame.color(hit.x, hit.y, 0)),
                                      static_cast<float>(frame.color(hit.x, hit.y, 1)),
                                      static_cast<float>(frame.color(hit.x, hit.y, 2)));
        }
        g.log_scale = Eigen::Vector3f::Constant(s0);
        g.opacity_logit = static_cast<float>(inverse_sigmoid(0.5));
        g.instance_id = kNoInstance;
        if (!frame.labels.empty()) {
            const std::uint32_t label = frame.labels(hit.x, hit.y);
            if (auto it = label_to_instance.find(label); label != 0 && it != label_to_instance.end()) {
                g.instance_id = it->second;
            }
        }
        map.add_gaussian(g, hit.key);
        added.push_back(g);
    }
    return added;
}

bool KeyframeSelector::consider(std::size_t index, const Pose &pose) {
    bool take = index % static_cast<std::size_t>(std::max(cfg_.keyframe_stride, 1)) == 0;
    if (!take && !selected_.empty()) {
        take = translation_error(last_, pose) > cfg_.keyframe_translation ||
               rotation_error(last_, pose) > cfg_.keyframe_rotation_deg * M_PI / 180.0;
    }
    if (take) {
        selected_.push_back(index);
        last_ = pose;
    }
    return take;
}

std::vector<std::size_t> select_keyframes(std::span<const Pose> poses, const OptimizerConfig &cfg) {
    KeyframeSelector sel(cfg);
    for (std::size_t i = 0; i < poses.size(); ++i) sel.consider(i, poses[i]);
    return sel.selected();
}

double keyframe_loss(std::span<const GaussianSplat> gaussians, const Keyframe &kf, const Intrinsics &K,
                     const LossWeights &w, LossComponents *components, GradientSet *grads, int threads) {
    RenderSettings settings;
    settings.threads = threads;
    const RenderOutput out = render_frame(gaussians, kf.pose, K, settings);
    LossComponents c;
    ColorImage g_rgb;
    DepthImage g_depth, g_normal;
    std::vector<Vec3> g_scale;
    const bool want = grads != nullptr;
    c.rgb = loss_rgb(out.color, kf.color, w.ssim, want ? &g_rgb : nullptr);
    c.depth = loss_depth(out.depth, kf.depth, want ? &g_depth : nullptr);
    c.normal = loss_normal(out.depth, kf.depth, K, want ? &g_normal : nullptr);
    c.scale = loss_scale(gaussians, w.r_allow, want ? &g_scale : nullptr);
    if (components) *components = c;
    if (want) {
        DepthImage upstream(K.width, K.height, 1, 0.0);
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            upstream.data()[i] = w.depth * g_depth.data()[i] + w.normal * g_normal.data()[i];
        }
        *grads = render_gradients(gaussians, kf.pose, K, g_rgb, upstream, false);
        for (std::size_t i = 0; i < gaussians.size(); ++i) grads->log_scale[i] += w.scale * g_scale[i];
    }
    return total_loss(c, w);
}

std::vector<bool> prune_mask(std::span<const GaussianSplat> gaussians, const OptimizerConfig &cfg) {
    std::vector<bool> remove(gaussians.size(), false);
    const double max_log = std::log(cfg.prune_max_scale);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        remove[i] = gaussians[i].opacity() < cfg.prune_min_opacity ||
                    gaussians[i].log_scale.cast<double>().maxCoeff() > max_log;
    }
    return remove;
}

void GaussianOptimizer::ensure_size(std::size_t n) {
    if (state_.size() < n) state_.resize(n);
    if (state_.size() > n) state_.resize(n);
}

void GaussianOptimizer::compact(const std::vector<bool> &removed) {
    std::vector<Moments> kept;
    kept.reserve(state_.size());
    for (std::size_t i = 0; i < state_.size(); ++i) {
        if (i >= removed.size() || !removed[i]) kept.push_back(state_[i]);
    }
    state_ = std::move(kept);
}

std::size_t GaussianOptimizer::prune(GaussianMap &map) {
    const std::vector<bool> remove = prune_mask(map.gaussians, cfg_);
    const auto n = static_cast<std::size_t>(std::count(remove.begin(), remove.end(), true));
    if (n == 0) return 0;
    ensure_size(map.gaussians.size());
    map.erase_gaussians(remove);
    compact(remove);
    return n;
}

double GaussianOptimizer::step(GaussianMap &map, const Keyframe &kf, const std::vector<bool> *trainable) {
    ensure_size(map.gaussians.size());
    GradientSet g;
    double loss = 0.0;
    try {
        loss = keyframe_loss(map.gaussians, kf, map.intrinsics, cfg_.loss, nullptr, &g, cfg_.threads);
    } catch (const Error &e) {
        if (e.code() != Errc::InvalidGradient) throw;
        fail(Errc::DivergedOptimization, e.what());
    }
    if (!std::isfinite(loss)) fail(Errc::DivergedOptimization, "non-finite loss");
    ++iteration_;
    std::array<double, 14> lr{};
    for (int k = 0; k < 3; ++k) {
        lr[k] = cfg_.lr.center * cfg_.scene_extent;
        lr[3 + k] = cfg_.lr.color;
        lr[6 + k] = cfg_.lr.scale;
    }
    for (int k = 9; k < 13; ++k) lr[k] = cfg_.lr.rotation;
    lr[13] = cfg_.lr.opacity;

    for (std::size_t i = 0; i < map.gaussians.size(); ++i) {
        if (trainable && !(*trainable)[i]) continue;
        std::array<double, 14> grad{};
        for (int k = 0; k < 3; ++k) {
            grad[k] = g.center[i][k];
            grad[3 + k] = g.color[i][k];
            grad[6 + k] = g.log_scale[i][k];
        }
        for (int k = 0; k < 4; ++k) grad[9 + k] = g.rotation[i][k];
        grad[13] = g.opacity_logit[i];
        bool any = false;
        for (double v : grad) any = any || v != 0.0;
        Moments &st = state_[i];
        if (!any && st.t == 0) continue;
        ++st.t;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, st.t);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, st.t);
        GaussianSplat &gs = map.gaussians[i];
        std::array<float *, 14> p{&gs.center[0],    &gs.center[1],   &gs.center[2],   &gs.color[0],
                                  &gs.color[1],     &gs.color[2],    &gs.log_scale[0], &gs.log_scale[1],
                                  &gs.log_scale[2], &gs.rotation[0], &gs.rotation[1], &gs.rotation[2],
                                  &gs.rotation[3],  &gs.opacity_logit};
        bool rotated = false;
        for (int k = 0; k < 14; ++k) {
            st.m[k] = cfg_.beta1 * st.m[k] + (1.0 - cfg_.beta1) * grad[k];
            st.v[k] = cfg_.beta2 * st.v[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
            const double update = lr[k] * (st.m[k] / bc1) / (std::sqrt(st.v[k] / bc2) + cfg_.epsilon);
            if (update == 0.0) continue;
            const float next = static_cast<float>(*p[k] - update);
            if (k >= 9 && k < 13 && next != *p[k]) rotated = true;
            *p[k] = next;
        }
        if (rotated) gs.rotation.normalize();
        gs.color = gs.color.cwiseMax(0.0f).cwiseMin(1.0f);
    }
    return loss;
}

std::vector<double> GaussianOptimizer::optimize(GaussianMap &map, std::span<const Keyframe> keyframes, int iterations,
                                                const std::vector<bool> *trainable, bool allow_prune) {
    std::vector<double> history;
    if (iterations <= 0) return history;
    if (keyframes.empty()) fail(Errc::InvalidArgument, "optimize needs at least one keyframe");
    history.reserve(static_cast<std::size_t>(iterations));
    for (int it = 0; it < iterations; ++it) {
        history.push_back(step(map, keyframes[static_cast<std::size_t>(it) % keyframes.size()], trainable));
        if (allow_prune && !trainable && cfg_.prune_interval > 0 && (it + 1) % cfg_.prune_interval == 0) prune(map);
    }
    return history;
}

} // namespace gsmind
