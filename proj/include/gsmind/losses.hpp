// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "gsmind/geometry.hpp"
#include "gsmind/image.hpp"

namespace gsmind {

struct LossWeights {
    double ssim = 0.2;   // lambda4
    double depth = 0.1;  // lambda5
    double normal = 0.1; // lambda6
    double scale = 1.0;  // lambda7
    double r_allow = 10.0;
};

struct LossComponents {
    double rgb = 0.0;
    double depth = 0.0;
    double normal = 0.0;
    double scale = 0.0;
};

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5), truncated and
/// renormalized at the border, C1 = 0.01^2, C2 = 0.03^2. Optional gradient w.r.t. `a`.
double ssim(const Image<double> &a, const Image<double> &b, Image<double> *grad_a = nullptr);

/// (1 - l4) mean|a - b| + l4 (1 - ssim(a, b)).
double loss_rgb(const ColorImage &rendered, const ColorImage &target, double lambda_ssim = 0.2,
                ColorImage *grad = nullptr);

/// Mean |a - b| over pixels where both depths are positive.
double loss_depth(const DepthImage &rendered, const DepthImage &target, DepthImage *grad = nullptr);

/// Mean 1 - <n_rendered, n_target> over pixels where both normals are nonzero.
double loss_normal(const DepthImage &rendered, const DepthImage &target, const Intrinsics &K,
                   DepthImage *grad = nullptr);

/// Hinge term of one Gaussian: max(0, max(log s) - min(log s) - log r_allow).
double scale_excess(const Vec3 &log_scale, double r_allow = 10.0);

/// Mean hinge max(0, log(max s / min s) - log r_allow) over the violating Gaussians.
double loss_scale(std::span<const GaussianSplat> gaussians, double r_allow = 10.0,
                  std::vector<Vec3> *grad_log_scale = nullptr);

double total_loss(const LossComponents &c, const LossWeights &w = {});

} // namespace gsmind
