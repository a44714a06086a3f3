// SPDX-License-Identifier: Apache-2.0
#include "gsmind/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace gsmind {
namespace {

constexpr int kTile = 4;

struct Splat2D {
    int index = 0;
    Vec2 mean;
    double qa = 0, qb = 0, qc = 0; // conic [[qa, qb], [qb, qc]]
    double opacity = 0;
    Vec3 color;
    double depth = 0;
    InstanceId instance = kNoInstance;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

// Extra per-splat state kept for the backward pass.
struct SplatGeom {
    Vec3 p_cam;
    Mat3 sigma_cam;
    Mat3 sigma_world;
    Eigen::Matrix<double, 2, 3> jac;
    Mat3 rot;
    Vec3 scale;
    Vec4 q_unit;
    double q_norm = 1;
    Vec3 center_world;
};

struct Prepared {
    std::vector<Splat2D> splats; // sorted front to back
    std::vector<SplatGeom> geom; // parallel to splats when requested
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<int>> tiles; // indices into splats, front to back
};

Prepared prepare(std::span<const GaussianSplat> gaussians, const Pose &pose, const Intrinsics &K,
                 bool keep_geom) {
    K.validate();
    Prepared out;
    const Mat3 r_cw = pose.rotation.transpose();
    std::vector<Splat2D> splats;
    std::vector<SplatGeom> geoms;
    splats.reserve(gaussians.size());
    if (keep_geom) geoms.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const GaussianSplat &gs = gaussians[i];
        const Vec3 u = gs.center.cast<double>();
        const Vec3 pc = r_cw * (u - pose.translation);
        if (!(pc.z() > kNearPlane)) continue;
        {
            // conservative footprint bound from the largest scale; rejects only what the exact test rejects
            const double s_max = std::exp(static_cast<double>(gs.log_scale.maxCoeff()));
            const double xz = pc.x() / pc.z(), yz = pc.y() / pc.z();
            const double bx = 2.0 * s_max * K.fx / pc.z() * std::sqrt(1.0 + xz * xz) + 2.0;
            const double by = 2.0 * s_max * K.fy / pc.z() * std::sqrt(1.0 + yz * yz) + 2.0;
            const double mx = K.fx * xz + K.cx, my = K.fy * yz + K.cy;
            if (std::isfinite(bx) && std::isfinite(by) &&
                (mx + bx < 0 || my + by < 0 || mx - bx > K.width - 1 || my - by > K.height - 1)) {
                continue;
            }
        }
        const Vec4 q = gs.rotation.cast<double>();
        const double qn = q.norm();
        if (!(qn > 0.0)) continue;
        const Mat3 rot = quaternion_to_matrix(q);
        const Vec3 scale = gs.log_scale.cast<double>().array().exp();
        const Mat3 m = rot * scale.asDiagonal();
        const Mat3 sigma = m * m.transpose();
        const Mat3 sigma_cam = r_cw * sigma * r_cw.transpose();
        const auto jac = projection_jacobian(pc, K);
        Mat2 cov = jac * sigma_cam * jac.transpose();
        cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
        if (!(det > 0.0) || !std::isfinite(det)) continue;
        Splat2D s;
        s.index = static_cast<int>(i);
        s.mean = {K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy};
        s.qa = cov(1, 1) / det;
        s.qb = -cov(0, 1) / det;
        s.qc = cov(0, 0) / det;
        s.opacity = sigmoid(gs.opacity_logit);
        s.color = gs.color.cast<double>();
        s.depth = pc.z();
        s.instance = gs.instance_id;
        // exact bounding box of the ellipse M <= 4, padded by one pixel
        const double rx = 2.0 * std::sqrt(cov(0, 0)) + 1.0;
        const double ry = 2.0 * std::sqrt(cov(1, 1)) + 1.0;
        const double fx0 = std::floor(s.mean.x() - rx), fx1 = std::ceil(s.mean.x() + rx);
        const double fy0 = std::floor(s.mean.y() - ry), fy1 = std::ceil(s.mean.y() + ry);
        if (fx1 < 0 || fy1 < 0 || fx0 > K.width - 1 || fy0 > K.height - 1) continue;
        s.x0 = static_cast<int>(std::max(0.0, fx0));
        s.x1 = static_cast<int>(std::min<double>(K.width - 1, fx1));
        s.y0 = static_cast<int>(std::max(0.0, fy0));
        s.y1 = static_cast<int>(std::min<double>(K.height - 1, fy1));
        if (keep_geom) {
            SplatGeom g;
            g.p_cam = pc;
            g.sigma_cam = sigma_cam;
            g.sigma_world = sigma;
            g.jac = jac;
            g.rot = rot;
            g.scale = scale;
            g.q_unit = q / qn;
            g.q_norm = qn;
            g.center_world = u;
            geoms.push_back(g);
        }
        splats.push_back(s);
    }
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return splats[a].index < splats[b].index;
    });
    out.splats.reserve(splats.size());
    if (keep_geom) out.geom.reserve(splats.size());
    for (int k : order) {
        out.splats.push_back(splats[k]);
        if (keep_geom) out.geom.push_back(geoms[k]);
    }
    out.tiles_x = (K.width + kTile - 1) / kTile;
    out.tiles_y = (K.height + kTile - 1) / kTile;
    out.tiles.assign(static_cast<std::size_t>(out.tiles_x) * out.tiles_y, {});
    for (int k = 0; k < static_cast<int>(out.splats.size()); ++k) {
        const Splat2D &s = out.splats[k];
        for (int ty = s.y0 / kTile; ty <= s.y1 / kTile; ++ty) {
            for (int tx = s.x0 / kTile; tx <= s.x1 / kTile; ++tx) {
                out.tiles[static_cast<std::size_t>(ty) * out.tiles_x + tx].push_back(k);
            }
        }
    }
    return out;
}

struct Contribution {
    int splat;
    double alpha;
    double gauss; // exp(-M/2)
    double dx, dy;
    double transmittance; // before this splat
    bool clamped;
};

// Front-to-back walk of one pixel; calls `fn` for every contributing splat.
template <typename Fn>
double blend_pixel(const Prepared &prep, int x, int y, Fn &&fn) {
    const auto &list =
        prep.tiles[static_cast<std::size_t>(y / kTile) * prep.tiles_x + x / kTile];
    double t = 1.0;
    for (int k : list) {
        const Splat2D &s = prep.splats[k];
        if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
        const double dx = x - s.mean.x();
        const double dy = y - s.mean.y();
        const double m = s.qa * dx * dx + 2.0 * s.qb * dx * dy + s.qc * dy * dy;
        if (!(m <= kFootprintRadiusSq)) continue;
        const double g = std::exp(-0.5 * m);
        const double raw = s.opacity * g;
        const bool clamped = raw > kAlphaClamp;
        const double a = clamped ? kAlphaClamp : raw;
        fn(Contribution{k, a, g, dx, dy, t, clamped});
        t *= (1.0 - a);
        if (t < kTransmittanceCutoff) break;
    }
    return t;
}

template <typename RowFn>
void for_rows(int height, int threads, RowFn &&row_fn) {
    if (threads <= 1 || height < 2) {
        for (int y = 0; y < height; ++y) row_fn(y);
        return;
    }
    const int n = std::min(threads, height);
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int w = 0; w < n; ++w) {
        pool.emplace_back([&, w] {
            for (int y = w; y < height; y += n) row_fn(y);
        });
    }
    for (auto &th : pool) th.join();
}

} // namespace

RenderOutput render_frame(std::span<const GaussianSplat> gaussians, const Pose &pose,
                          const Intrinsics &K, const RenderSettings &settings) {
    const Prepared prep = prepare(gaussians, pose, K, false);
    RenderOutput out;
    out.color = ColorImage(K.width, K.height, 3, 0.0);
    out.depth = DepthImage(K.width, K.height, 1, 0.0);
    out.alpha = Image<double>(K.width, K.height, 1, 0.0);
    out.instance_map = LabelImage(K.width, K.height, 1, kNoInstance);

    for_rows(K.height, settings.threads, [&](int y) {
        std::vector<std::pair<InstanceId, double>> weights;
        for (int x = 0; x < K.width; ++x) {
            Vec3 c = Vec3::Zero();
            double depth_sum = 0.0;
            double acc = 0.0;
            weights.clear();
            blend_pixel(prep, x, y, [&](const Contribution &ct) {
                const Splat2D &s = prep.splats[ct.splat];
                const double w = ct.alpha * ct.transmittance;
                c += w * s.color;
                depth_sum += w * s.depth;
                acc += w;
                auto it = std::find_if(weights.begin(), weights.end(),
                                       [&](const auto &p) { return p.first == s.instance; });
                if (it == weights.end()) {
                    weights.emplace_back(s.instance, w);
                } else {
                    it->second += w;
                }
            });
            out.color(x, y, 0) = c.x();
            out.color(x, y, 1) = c.y();
            out.color(x, y, 2) = c.z();
            out.depth(x, y) = acc > 0.0 ? depth_sum / acc : 0.0;
            out.alpha(x, y) = acc;
            if (acc >= settings.mask_alpha_threshold) {
                InstanceId best = kNoInstance;
                double best_w = -1.0;
                for (const auto &[id, w] : weights) {
                    if (w > best_w || (w == best_w && id < best)) {
                        best = id;
                        best_w = w;
                    }
                }
                out.instance_map(x, y) = best;
            }
        }
    });
    return out;
}

void GradientSet::resize(std::size_t n) {
    center.assign(n, Vec3::Zero());
    color.assign(n, Vec3::Zero());
    log_scale.assign(n, Vec3::Zero());
    rotation.assign(n, Vec4::Zero());
    opacity_logit.assign(n, 0.0);
}

bool GradientSet::all_finite() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!center[i].allFinite() || !color[i].allFinite() || !log_scale[i].allFinite() ||
            !rotation[i].allFinite() || !std::isfinite(opacity_logit[i])) {
            return false;
        }
    }
    return !pose || pose->allFinite();
}

GradientSet render_gradients(std::span<const GaussianSplat> gaussians, const Pose &pose,
                             const Intrinsics &K, const ColorImage &loss_color_grad,
                             const DepthImage &loss_depth_grad, bool want_pose_grad) {
    if (!loss_color_grad.same_shape(K.width, K.height, 3) ||
        !loss_depth_grad.same_shape(K.width, K.height, 1)) {
        fail(Errc::ShapeMismatch, "upstream gradient shape does not match intrinsics");
    }
    for (double v : loss_color_grad.data()) {
        if (!std::isfinite(v)) fail(Errc::InvalidGradient, "non-finite color gradient");
    }
    for (double v : loss_depth_grad.data()) {
        if (!std::isfinite(v)) fail(Errc::InvalidGradient, "non-finite depth gradient");
    }

    GradientSet grads;
    grads.resize(gaussians.size());
    if (want_pose_grad) grads.pose = Vec6::Zero();

    const Prepared prep = prepare(gaussians, pose, K, true);
    const std::size_t n = prep.splats.size();
    std::vector<double> g_opacity(n, 0.0), g_depth(n, 0.0);
    std::vector<Vec2> g_mean(n, Vec2::Zero());
    std::vector<Mat2> g_conic(n, Mat2::Zero());
    std::vector<Vec3> g_color(n, Vec3::Zero());

    std::vector<Contribution> contribs;
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            const Vec3 gc(loss_color_grad(x, y, 0), loss_color_grad(x, y, 1),
                          loss_color_grad(x, y, 2));
            const double gd = loss_depth_grad(x, y);
            if (gc.isZero(0.0) && gd == 0.0) continue;
            contribs.clear();
            double depth_sum = 0.0, acc = 0.0;
            blend_pixel(prep, x, y, [&](const Contribution &ct) {
                contribs.push_back(ct);
                const double w = ct.alpha * ct.transmittance;
                depth_sum += w * prep.splats[ct.splat].depth;
                acc += w;
            });
            if (contribs.empty()) continue;
            // depth = N / A: split into the two blended channels N (value d_i) and A (value 1)
            double g_n = 0.0, g_a = 0.0;
            if (acc > 0.0 && gd != 0.0) {
                g_n = gd / acc;
                g_a = -gd * depth_sum / (acc * acc);
            }
            double suffix = 0.0;
            for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                const Splat2D &s = prep.splats[it->splat];
                const double dot = gc.dot(s.color) + g_n * s.depth + g_a;
                const double w = it->alpha * it->transmittance;
                g_color[it->splat] += gc * w;
                g_depth[it->splat] += g_n * w;
                const double g_alpha = it->transmittance * dot - suffix / (1.0 - it->alpha);
                suffix += w * dot;
                if (it->clamped) continue;
                g_opacity[it->splat] += g_alpha * it->gauss;
                const double g_m = -0.5 * it->alpha * g_alpha;
                const double dx = it->dx, dy = it->dy;
                g_mean[it->splat].x() += g_m * (-2.0) * (s.qa * dx + s.qb * dy);
                g_mean[it->splat].y() += g_m * (-2.0) * (s.qb * dx + s.qc * dy);
                Mat2 &gq = g_conic[it->splat];
                gq(0, 0) += g_m * dx * dx;
                gq(0, 1) += g_m * dx * dy;
                gq(1, 0) += g_m * dx * dy;
                gq(1, 1) += g_m * dy * dy;
            }
        }
    }

    const Mat3 r_wc = pose.rotation.transpose();
    const Vec3 t_wc = -(r_wc * pose.translation);
    Mat3 g_r_wc = Mat3::Zero();
    Vec3 g_t_wc = Vec3::Zero();

    for (std::size_t k = 0; k < n; ++k) {
        if (g_opacity[k] == 0.0 && g_depth[k] == 0.0 && g_mean[k].isZero(0.0) && g_conic[k].isZero(0.0) &&
            g_color[k].isZero(0.0)) {
            continue;
        }
        const Splat2D &s = prep.splats[k];
        const SplatGeom &g = prep.geom[k];
        const int gi = s.index;
        const double o = s.opacity;
        grads.color[gi] = g_color[k];
        grads.opacity_logit[gi] = g_opacity[k] * o * (1.0 - o);

        Mat2 conic;
        conic << s.qa, s.qb, s.qb, s.qc;
        const Mat2 g_cov2d = -(conic * g_conic[k] * conic);
        const Mat3 g_sigma_cam = g.jac.transpose() * g_cov2d * g.jac;
        const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * g.jac * g.sigma_cam;

        const double px = g.p_cam.x(), py = g.p_cam.y(), pz = g.p_cam.z();
        const double iz = 1.0 / pz, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 g_pc = Vec3::Zero();
        g_pc.x() += g_mean[k].x() * K.fx * iz;
        g_pc.y() += g_mean[k].y() * K.fy * iz;
        g_pc.z() += -g_mean[k].x() * K.fx * px * iz2 - g_mean[k].y() * K.fy * py * iz2;
        g_pc.x() += g_jac(0, 2) * (-K.fx * iz2);
        g_pc.y() += g_jac(1, 2) * (-K.fy * iz2);
        g_pc.z() += g_jac(0, 0) * (-K.fx * iz2) + g_jac(0, 2) * (2.0 * K.fx * px * iz3) +
                    g_jac(1, 1) * (-K.fy * iz2) + g_jac(1, 2) * (2.0 * K.fy * py * iz3);
        g_pc.z() += g_depth[k];

        grads.center[gi] = r_wc.transpose() * g_pc;
        Mat3 g_sigma = r_wc.transpose() * g_sigma_cam * r_wc;
        g_sigma = 0.5 * (g_sigma + g_sigma.transpose());

        const Mat3 m = g.rot * g.scale.asDiagonal();
        const Mat3 g_m = 2.0 * g_sigma * m;
        const Mat3 g_rot = g_m * g.scale.asDiagonal();
        const Mat3 rt_gm = g.rot.transpose() * g_m;
        for (int a = 0; a < 3; ++a) grads.log_scale[gi][a] = rt_gm(a, a) * g.scale[a];

        const double w = g.q_unit[0], qx = g.q_unit[1], qy = g.q_unit[2], qz = g.q_unit[3];
        Mat3 dw, dx, dy, dz;
        dw << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
        dx << 0, qy, qz, qy, -2 * qx, -w, qz, w, -2 * qx;
        dy << -2 * qy, qx, w, qx, 0, qz, -w, qz, -2 * qy;
        dz << -2 * qz, -w, qx, w, -2 * qz, qy, qx, qy, 0;
        Vec4 g_qhat(2.0 * (g_rot.cwiseProduct(dw)).sum(), 2.0 * (g_rot.cwiseProduct(dx)).sum(),
                    2.0 * (g_rot.cwiseProduct(dy)).sum(), 2.0 * (g_rot.cwiseProduct(dz)).sum());
        grads.rotation[gi] = (g_qhat - g.q_unit * g.q_unit.dot(g_qhat)) / g.q_norm;

        if (want_pose_grad) {
            g_r_wc += g_pc * g.center_world.transpose() + 2.0 * g_sigma_cam * r_wc * g.sigma_world;
            g_t_wc += g_pc;
        }
    }

    if (want_pose_grad) {
        Vec6 gp;
        gp.head<3>() = -g_t_wc;
        for (int k = 0; k < 3; ++k) {
            const Mat3 e = skew(Vec3::Unit(k));
            gp[3 + k] = -(g_r_wc.cwiseProduct(e * r_wc)).sum() - g_t_wc.dot(e * t_wc);
        }
        grads.pose = gp;
    }
    if (!grads.all_finite()) fail(Errc::InvalidGradient, "non-finite gradient produced");
    return grads;
}

Mask silhouette_mask(const RenderOutput &out, const DepthImage &observed_depth, double threshold) {
    require_same_extent(out.depth, observed_depth, "silhouette: observed depth shape mismatch");
    Mask m(out.width(), out.height(), 1, 0);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            m(x, y) = out.depth(x, y) > 0.0 && observed_depth(x, y) > 0.0 &&
                      out.alpha(x, y) > threshold;
        }
    }
    return m;
}

Mask alpha_mask(const RenderOutput &out, double threshold) {
    Mask m(out.width(), out.height(), 1, 0);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) m(x, y) = out.alpha(x, y) >= threshold;
    }
    return m;
}

namespace {

bool normal_support(const DepthImage &d, int x, int y) {
    if (x <= 0 || y <= 0 || x >= d.width() - 1 || y >= d.height() - 1) return false;
    return d(x, y) > 0.0 && d(x - 1, y) > 0.0 && d(x + 1, y) > 0.0 && d(x, y - 1) > 0.0 &&
           d(x, y + 1) > 0.0;
}

Vec3 backproject(const DepthImage &d, int x, int y, const Intrinsics &K) {
    return d(x, y) * pixel_ray(x, y, K);
}

} // namespace

Image<double> depth_to_normals(const DepthImage &depth, const Intrinsics &K) {
    Image<double> normals(depth.width(), depth.height(), 3, 0.0);
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            if (!normal_support(depth, x, y)) continue;
            const Vec3 tx = backproject(depth, x + 1, y, K) - backproject(depth, x - 1, y, K);
            const Vec3 ty = backproject(depth, x, y + 1, K) - backproject(depth, x, y - 1, K);
            const Vec3 n = ty.cross(tx);
            const double len = n.norm();
            if (!(len > 0.0)) continue;
            for (int c = 0; c < 3; ++c) normals(x, y, c) = n[c] / len;
        }
    }
    return normals;
}

DepthImage depth_to_normals_backward(const DepthImage &depth, const Intrinsics &K,
                                     const Image<double> &normal_grad) {
    require_same_extent(depth, normal_grad, "normal gradient shape mismatch");
    DepthImage grad(depth.width(), depth.height(), 1, 0.0);
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            if (!normal_support(depth, x, y)) continue;
            const Vec3 g(normal_grad(x, y, 0), normal_grad(x, y, 1), normal_grad(x, y, 2));
            if (g.isZero(0.0)) continue;
            const Vec3 tx = backproject(depth, x + 1, y, K) - backproject(depth, x - 1, y, K);
            const Vec3 ty = backproject(depth, x, y + 1, K) - backproject(depth, x, y - 1, K);
            const Vec3 n = ty.cross(tx);
            const double len = n.norm();
            if (!(len > 0.0)) continue;
            const Vec3 nh = n / len;
            const Vec3 g_n = (g - nh * nh.dot(g)) / len;
            const Vec3 g_ty = tx.cross(g_n);
            const Vec3 g_tx = g_n.cross(ty);
            grad(x + 1, y) += g_tx.dot(pixel_ray(x + 1, y, K));
            grad(x - 1, y) -= g_tx.dot(pixel_ray(x - 1, y, K));
            grad(x, y + 1) += g_ty.dot(pixel_ray(x, y + 1, K));
            grad(x, y - 1) -= g_ty.dot(pixel_ray(x, y - 1, K));
        }
    }
    return grad;
}

} // namespace gsmind
