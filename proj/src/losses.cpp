// SPDX-License-Identifier: Apache-2.0
#include "gsmind/losses.hpp"

#include <array>
#include <cmath>

#include "gsmind/render.hpp"

namespace gsmind {
namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, 2 * kRadius + 1> &window() {
    static const auto w = [] {
        std::array<double, 2 * kRadius + 1> out{};
        for (int k = -kRadius; k <= kRadius; ++k) out[k + kRadius] = std::exp(-(k * k) / (2.0 * kSigma * kSigma));
        return out;
    }();
    return w;
}

// Normalized 1D filter along x (axis 0) or y (axis 1), per channel.
Image<double> filter(const Image<double> &in, int axis, bool transpose) {
    const auto &w = window();
    const int W = in.width(), H = in.height(), C = in.channels();
    const int n = axis == 0 ? W : H;
    std::vector<double> norm(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int k = -kRadius; k <= kRadius; ++k) {
            if (i + k >= 0 && i + k < n) norm[i] += w[k + kRadius];
        }
    }
    Image<double> out(W, H, C, 0.0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int i = axis == 0 ? x : y;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int j = i + k;
                if (j < 0 || j >= n) continue;
                const int sx = axis == 0 ? j : x, sy = axis == 0 ? y : j;
                // forward: out[i] += w * in[j] / norm[i]; transpose: out[j] gets in[i] * w / norm[i]
                const double coef = w[k + kRadius] / norm[i];
                for (int c = 0; c < C; ++c) {
                    if (transpose) {
                        out(sx, sy, c) += coef * in(x, y, c);
                    } else {
                        out(x, y, c) += coef * in(sx, sy, c);
                    }
                }
            }
        }
    }
    return out;
}

Image<double> blur(const Image<double> &in) { return filter(filter(in, 0, false), 1, false); }
Image<double> blur_transpose(const Image<double> &in) { return filter(filter(in, 1, true), 0, true); }

} // namespace

double ssim(const Image<double> &a, const Image<double> &b, Image<double> *grad_a) {
    if (!a.same_shape(b.width(), b.height(), b.channels())) fail(Errc::ShapeMismatch, "ssim: shapes differ");
    if (a.empty()) fail(Errc::InvalidArgument, "ssim: empty image");
    Image<double> aa = a, bb = b, ab = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa.data()[i] = a.data()[i] * a.data()[i];
        bb.data()[i] = b.data()[i] * b.data()[i];
        ab.data()[i] = a.data()[i] * b.data()[i];
    }
    const Image<double> ma = blur(a), mb = blur(b), eaa = blur(aa), ebb = blur(bb), eab = blur(ab);
    const double count = static_cast<double>(a.size());
    Image<double> g_ma, g_eaa, g_eab;
    if (grad_a) {
        g_ma = Image<double>(a.width(), a.height(), a.channels(), 0.0);
        g_eaa = g_ma;
        g_eab = g_ma;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double mua = ma.data()[i], mub = mb.data()[i];
        const double n1 = 2.0 * mua * mub + kC1;
        const double n2 = 2.0 * (eab.data()[i] - mua * mub) + kC2;
        const double d1 = mua * mua + mub * mub + kC1;
        const double d2 = eaa.data()[i] - mua * mua + ebb.data()[i] - mub * mub + kC2;
        const double den = d1 * d2;
        const double s = n1 * n2 / den;
        sum += s;
        if (grad_a) {
            const double dnum = 2.0 * mub * n2 - 2.0 * mub * n1;
            const double dden = 2.0 * mua * d2 - 2.0 * mua * d1;
            g_ma.data()[i] = (dnum - s * dden) / den / count;
            g_eaa.data()[i] = -s / d2 / count;
            g_eab.data()[i] = 2.0 * n1 / den / count;
        }
    }
    if (grad_a) {
        const Image<double> t_ma = blur_transpose(g_ma), t_eaa = blur_transpose(g_eaa), t_eab = blur_transpose(g_eab);
        *grad_a = Image<double>(a.width(), a.height(), a.channels(), 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            grad_a->data()[i] = t_ma.data()[i] + 2.0 * a.data()[i] * t_eaa.data()[i] + b.data()[i] * t_eab.data()[i];
        }
    }
    return sum / count;
}

double loss_rgb(const ColorImage &rendered, const ColorImage &target, double lambda_ssim, ColorImage *grad) {
    if (!rendered.same_shape(target.width(), target.height(), target.channels())) {
        fail(Errc::ShapeMismatch, "loss_rgb: shapes differ");
    }
    const double count = static_cast<double>(rendered.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) l1 += std::abs(rendered.data()[i] - target.data()[i]);
    l1 /= count;
    Image<double> g_ssim;
    const double s = ssim(rendered, target, grad ? &g_ssim : nullptr);
    if (grad) {
        *grad = ColorImage(rendered.width(), rendered.height(), rendered.channels(), 0.0);
        for (std::size_t i = 0; i < rendered.size(); ++i) {
            const double d = rendered.data()[i] - target.data()[i];
            const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            grad->data()[i] = (1.0 - lambda_ssim) * sign / count - lambda_ssim * g_ssim.data()[i];
        }
    }
    return (1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s);
}

double loss_depth(const DepthImage &rendered, const DepthImage &target, DepthImage *grad) {
    require_same_extent(rendered, target, "loss_depth: shapes differ");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        if (rendered.data()[i] > 0.0 && target.data()[i] > 0.0) {
            sum += std::abs(rendered.data()[i] - target.data()[i]);
            ++n;
        }
    }
    if (grad) {
        *grad = DepthImage(rendered.width(), rendered.height(), 1, 0.0);
        if (n > 0) {
            for (std::size_t i = 0; i < rendered.size(); ++i) {
                if (!(rendered.data()[i] > 0.0 && target.data()[i] > 0.0)) continue;
                const double d = rendered.data()[i] - target.data()[i];
                grad->data()[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
            }
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double loss_normal(const DepthImage &rendered, const DepthImage &target, const Intrinsics &K, DepthImage *grad) {
    require_same_extent(rendered, target, "loss_normal: shapes differ");
    const Image<double> nr = depth_to_normals(rendered, K);
    const Image<double> nt = depth_to_normals(target, K);
    double sum = 0.0;
    std::size_t n = 0;
    std::vector<std::size_t> valid;
    for (std::size_t p = 0; p < rendered.size(); ++p) {
        const Vec3 a(nr.data()[3 * p], nr.data()[3 * p + 1], nr.data()[3 * p + 2]);
        const Vec3 b(nt.data()[3 * p], nt.data()[3 * p + 1], nt.data()[3 * p + 2]);
        if (a.isZero(0.0) || b.isZero(0.0)) continue;
        sum += 1.0 - a.dot(b);
        ++n;
        valid.push_back(p);
    }
    if (grad) {
        *grad = DepthImage(rendered.width(), rendered.height(), 1, 0.0);
        if (n > 0) {
            Image<double> gn(rendered.width(), rendered.height(), 3, 0.0);
            for (std::size_t p : valid) {
                for (int c = 0; c < 3; ++c) gn.data()[3 * p + c] = -nt.data()[3 * p + c] / static_cast<double>(n);
            }
            *grad = depth_to_normals_backward(rendered, K, gn);
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double scale_excess(const Vec3 &log_scale, double r_allow) {
    return std::max(0.0, log_scale.maxCoeff() - log_scale.minCoeff() - std::log(r_allow));
}

double loss_scale(std::span<const GaussianSplat> gaussians, double r_allow, std::vector<Vec3> *grad_log_scale) {
    double sum = 0.0;
    std::vector<std::size_t> violating;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const double excess = scale_excess(gaussians[i].log_scale.cast<double>(), r_allow);
        if (excess > 0.0) {
            sum += excess;
            violating.push_back(i);
        }
    }
    if (grad_log_scale) {
        grad_log_scale->assign(gaussians.size(), Vec3::Zero());
        for (std::size_t i : violating) {
            const Vec3 s = gaussians[i].log_scale.cast<double>();
            int hi = 0, lo = 0;
            s.maxCoeff(&hi);
            s.minCoeff(&lo);
            (*grad_log_scale)[i][hi] += 1.0 / static_cast<double>(violating.size());
            (*grad_log_scale)[i][lo] -= 1.0 / static_cast<double>(violating.size());
        }
    }
    return violating.empty() ? 0.0 : sum / static_cast<double>(violating.size());
}

double total_loss(const LossComponents &c, const LossWeights &w) {
    return c.rgb + w.depth * c.depth + w.normal * c.normal + w.scale * c.scale;
}

} // namespace gsmind
