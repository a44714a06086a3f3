// SPDX-License-Identifier: Apache-2.0
// Deliberately naive reference renderer: every pixel tests every Gaussian and sorts its own
// contributor list. Shares no code with the tiled rasterizer beyond public geometry.
#include <algorithm>
#include <cmath>
#include <map>

#include "gsmind/render.hpp"

namespace gsmind {

RenderOutput oracle_render(std::span<const GaussianSplat> gaussians, const Pose &pose,
                           const Intrinsics &K, double mask_alpha_threshold) {
    K.validate();
    RenderOutput out;
    out.color = ColorImage(K.width, K.height, 3, 0.0);
    out.depth = DepthImage(K.width, K.height, 1, 0.0);
    out.alpha = Image<double>(K.width, K.height, 1, 0.0);
    out.instance_map = LabelImage(K.width, K.height, 1, kNoInstance);

    struct Hit {
        double depth;
        std::size_t index;
        double alpha;
    };
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            std::vector<Hit> hits;
            for (std::size_t i = 0; i < gaussians.size(); ++i) {
                const GaussianSplat &g = gaussians[i];
                if (!(world_to_camera(pose, g.center.cast<double>()).z() > kNearPlane)) continue;
                Vec4 q = g.rotation.cast<double>();
                if (!(q.norm() > 0.0)) continue;
                const Vec3 pc = world_to_camera(pose, g.center.cast<double>());
                const Mat3 rot = quaternion_to_matrix(q);
                const Vec3 var = (2.0 * g.log_scale.cast<double>()).array().exp();
                const Mat3 sigma = rot * var.asDiagonal() * rot.transpose();
                const Mat3 r_cw = pose.rotation.transpose();
                const auto j = projection_jacobian(pc, K);
                Mat2 cov = j * (r_cw * sigma * r_cw.transpose()) * j.transpose();
                cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
                if (!(cov.determinant() > 0.0)) continue;
                const Vec2 mean(K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy);
                const Vec2 d = Vec2(x, y) - mean;
                const double m = d.dot(cov.inverse() * d);
                if (!(m <= kFootprintRadiusSq)) continue;
                const double alpha = std::min(kAlphaClamp, sigmoid(g.opacity_logit) * std::exp(-0.5 * m));
                hits.push_back({pc.z(), i, alpha});
            }
            std::sort(hits.begin(), hits.end(), [](const Hit &a, const Hit &b) {
                return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
            });
            double t = 1.0, acc = 0.0, dsum = 0.0;
            Vec3 c = Vec3::Zero();
            std::map<InstanceId, double> per_instance;
            for (const Hit &h : hits) {
                const double w = h.alpha * t;
                c += w * gaussians[h.index].color.cast<double>();
                dsum += w * h.depth;
                acc += w;
                per_instance[gaussians[h.index].instance_id] += w;
                t *= 1.0 - h.alpha;
                if (t < kTransmittanceCutoff) break;
            }
            for (int ch = 0; ch < 3; ++ch) out.color(x, y, ch) = c[ch];
            out.depth(x, y) = acc > 0.0 ? dsum / acc : 0.0;
            out.alpha(x, y) = acc;
            if (acc >= mask_alpha_threshold) {
                InstanceId best = kNoInstance;
                double best_w = -1.0;
                for (const auto &[id, w] : per_instance) { // ascending id: strict > keeps lowest on ties
                    if (w > best_w) {
                        best = id;
                        best_w = w;
                    }
                }
                out.instance_map(x, y) = best;
            }
        }
    }
    return out;
}

} // namespace gsmind
