// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gsmind/geometry.hpp"
#include "gsmind/image.hpp"

namespace gsmind {

inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kTransmittanceCutoff = 1e-4;
/// Squared Mahalanobis radius of the screen-space footprint (2 sigma).
inline constexpr double kFootprintRadiusSq = 4.0;
inline constexpr double kMaskAlphaThreshold = 0.5;
inline constexpr double kSilhouetteThreshold = 0.98;

struct RenderSettings {
    int threads = 1;
    double mask_alpha_threshold = kMaskAlphaThreshold;
};

/// Rendered planes for one view. Depth is the alpha-normalized blend of center depths
/// (0 where nothing was accumulated).
struct RenderOutput {
    ColorImage color;
    DepthImage depth;
    Image<double> alpha;
    LabelImage instance_map; // kNoInstance where alpha < mask threshold

    int width() const { return color.width(); }
    int height() const { return color.height(); }
};

/// Alpha-blended rasterization: global front-to-back sort by camera depth (ties by index),
/// alpha = min(0.99, o exp(-M/2)) inside the 2-sigma footprint, early stop once T < 1e-4.
RenderOutput render_frame(std::span<const GaussianSplat> gaussians, const Pose &pose,
                          const Intrinsics &K, const RenderSettings &settings = {});

/// Per-pixel reference renderer: same contract as render_frame, no tiling or culling.
RenderOutput oracle_render(std::span<const GaussianSplat> gaussians, const Pose &pose,
                           const Intrinsics &K, double mask_alpha_threshold = kMaskAlphaThreshold);

struct GradientSet {
    std::vector<Vec3> center;
    std::vector<Vec3> color;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rotation;
    std::vector<double> opacity_logit;
    /// d loss / d delta for the right perturbation pose * [Rodrigues(phi) | rho], delta = (rho, phi).
    std::optional<Vec6> pose;

    void resize(std::size_t n);
    std::size_t size() const { return center.size(); }
    bool all_finite() const;
};

/// Backpropagates per-pixel upstream gradients of the color and depth planes.
GradientSet render_gradients(std::span<const GaussianSplat> gaussians, const Pose &pose,
                             const Intrinsics &K, const ColorImage &loss_color_grad,
                             const DepthImage &loss_depth_grad, bool want_pose_grad);

/// Pixels with rendered depth > 0, observed depth > 0 and alpha > threshold.
Mask silhouette_mask(const RenderOutput &out, const DepthImage &observed_depth,
                     double threshold = kSilhouetteThreshold);

/// Unit normals from central-difference tangents of back-projected depth; zero where the
/// pixel or any 4-neighbour has no depth, and on the image border.
Image<double> depth_to_normals(const DepthImage &depth, const Intrinsics &K);

/// Vector-Jacobian product of depth_to_normals: gradient w.r.t. depth given d loss / d normals.
DepthImage depth_to_normals_backward(const DepthImage &depth, const Intrinsics &K,
                                     const Image<double> &normal_grad);

Mask alpha_mask(const RenderOutput &out, double threshold = kMaskAlphaThreshold);

} // namespace gsmind
