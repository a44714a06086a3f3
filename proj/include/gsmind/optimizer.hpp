// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "gsmind/frame.hpp"
#include "gsmind/gaussian_map.hpp"
#include "gsmind/losses.hpp"
#include "gsmind/render.hpp"

namespace gsmind {

struct LearningRates {
    double center = 1.6e-4; // multiplied by the scene extent
    double color = 2.5e-3;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct OptimizerConfig {
    LossWeights loss;
    LearningRates lr;
    double scene_extent = 1.0;
    int keyframe_stride = 5;  // delta_n
    int window_size = 10;     // delta_m
    double keyframe_translation = 0.15;
    double keyframe_rotation_deg = 15.0;
    int iterations = 500;
    int iterations_per_keyframe = 30;
    int prune_interval = 100;
    double prune_min_opacity = 0.005;
    double prune_max_scale = 0.5;
    double initial_scale_factor = 0.75;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    int threads = 1;
};

struct Keyframe {
    std::uint32_t frame_id = 0;
    Pose pose;
    ColorImage color;
    DepthImage depth;
};

/// One Gaussian per newly observed voxel, seeded from the pixel that first hit it.
/// `label_to_instance` maps frame label values to map instance ids (absent: background).
std::vector<GaussianSplat> densify(GaussianMap &map, std::span<const VoxelHit> new_voxels,
                                   const FrameObservation &frame,
                                   const std::unordered_map<std::uint32_t, InstanceId> &label_to_instance,
                                   const OptimizerConfig &cfg = {});

/// Stride/motion keyframe rule over a pose stream.
class KeyframeSelector {
public:
    explicit KeyframeSelector(const OptimizerConfig &cfg = {}) : cfg_(cfg) {}
    bool consider(std::size_t index, const Pose &pose);
    const std::vector<std::size_t> &selected() const noexcept { return selected_; }

private:
    OptimizerConfig cfg_;
    std::vector<std::size_t> selected_;
    Pose last_;
};

std::vector<std::size_t> select_keyframes(std::span<const Pose> poses, const OptimizerConfig &cfg = {});

/// The most recent `window` entries.
template <typename T>
std::span<const T> recent_window(std::span<const T> all, int window) {
    const std::size_t n = std::min<std::size_t>(all.size(), static_cast<std::size_t>(std::max(window, 0)));
    return all.subspan(all.size() - n, n);
}

/// Total loss of one keyframe and (optionally) its parameter gradients.
double keyframe_loss(std::span<const GaussianSplat> gaussians, const Keyframe &kf, const Intrinsics &K,
                     const LossWeights &w, LossComponents *components = nullptr, GradientSet *grads = nullptr,
                     int threads = 1);

/// Flags Gaussians below the opacity floor or above the extent ceiling.
std::vector<bool> prune_mask(std::span<const GaussianSplat> gaussians, const OptimizerConfig &cfg = {});

/// Adam over all Gaussian parameters with one learning rate per group.
class GaussianOptimizer {
public:
    explicit GaussianOptimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    const OptimizerConfig &config() const noexcept { return cfg_; }
    OptimizerConfig &config() noexcept { return cfg_; }

    /// One step on `kf`. Only Gaussians with trainable[i] set move (all when null).
    double step(GaussianMap &map, const Keyframe &kf, const std::vector<bool> *trainable = nullptr);

    /// Round-robin over `keyframes`; prunes every prune_interval iterations when allowed.
    /// Returns the per-iteration loss. NaN loss throws DivergedOptimization.
    std::vector<double> optimize(GaussianMap &map, std::span<const Keyframe> keyframes, int iterations,
                                 const std::vector<bool> *trainable = nullptr, bool allow_prune = true);

    /// Removes flagged Gaussians and compacts optimizer state; returns the count removed.
    std::size_t prune(GaussianMap &map);

    /// Drops state for erased Gaussians (same mask as GaussianMap::erase_gaussians).
    void compact(const std::vector<bool> &removed);

private:
    struct Moments {
        std::array<double, 14> m{};
        std::array<double, 14> v{};
        std::uint32_t t = 0;
    };
    void ensure_size(std::size_t n);

    OptimizerConfig cfg_;
    std::vector<Moments> state_;
    std::uint64_t iteration_ = 0;
};

} // namespace gsmind
