// SPDX-License-Identifier: Apache-2.0
#include "gsmind/updater.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace gsmind {

Pose FilePoseProvider::coarse_pose(const FrameObservation &frame) {
    auto it = poses_.find(frame.frame_id);
    if (it == poses_.end()) fail(Errc::MissingFile, "no pose for frame " + std::to_string(frame.frame_id));
    return it->second;
}

Pose perturb_pose(const Pose &pose, double translation_m, double rotation_rad, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    auto unit = [&] {
        Vec3 v(n(rng), n(rng), n(rng));
        return Vec3(v.normalized());
    };
    Vec6 delta;
    delta.head<3>() = translation_m * unit();
    delta.tail<3>() = rotation_rad * unit();
    // translation is applied in the camera frame, so its world length is exactly translation_m
    return retract(pose, delta);
}

Pose MockPoseProvider::coarse_pose(const FrameObservation &frame) {
    return perturb_pose(frame.pose, translation_, rotation_, rng_);
}

std::vector<float> HistogramEmbedder::embed(const ColorImage &image, const Mask &mask) const {
    require_same_extent(image, mask, "embed: mask shape mismatch");
    constexpr int kBins = 4;
    std::vector<float> hist(kBins * kBins * kBins, 0.0f);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (!mask(x, y)) continue;
            std::array<int, 3> lo{};
            std::array<double, 3> frac{};
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image(x, y, c), 0.0, 1.0) * kBins - 0.5;
                const double f = std::floor(v);
                lo[c] = static_cast<int>(f);
                frac[c] = v - f;
            }
            for (int corner = 0; corner < 8; ++corner) {
                double w = 1.0;
                std::array<int, 3> idx{};
                for (int c = 0; c < 3; ++c) {
                    const int up = (corner >> c) & 1;
                    idx[c] = std::clamp(lo[c] + up, 0, kBins - 1);
                    w *= up ? frac[c] : 1.0 - frac[c];
                }
                hist[(idx[0] * kBins + idx[1]) * kBins + idx[2]] += static_cast<float>(w);
            }
        }
    }
    double norm = 0.0;
    for (float v : hist) norm += static_cast<double>(v) * v;
    if (norm > 0.0) {
        for (float &v : hist) v = static_cast<float>(v / std::sqrt(norm));
    }
    return hist;
}

namespace {

struct PoseLoss {
    double loss = 0.0;
    std::size_t pixels = 0;
    ColorImage g_color;
    DepthImage g_depth;
};

PoseLoss pose_loss(const RenderOutput &out, const FrameObservation &frame, const UpdateConfig &cfg) {
    const Mask sil = silhouette_mask(out, frame.depth, cfg.silhouette_threshold);
    PoseLoss r;
    r.pixels = count_set(sil);
    r.g_color = ColorImage(out.width(), out.height(), 3, 0.0);
    r.g_depth = DepthImage(out.width(), out.height(), 1, 0.0);
    if (r.pixels == 0) return r;
    const double inv = 1.0 / static_cast<double>(r.pixels);
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (!sil(x, y)) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = out.color(x, y, c) - frame.color(x, y, c);
                r.loss += std::abs(d) * inv;
                r.g_color(x, y, c) = sign(d) * inv;
            }
            const double dd = out.depth(x, y) - frame.depth(x, y);
            r.loss += cfg.reloc_lambda_depth * std::abs(dd) * inv;
            r.g_depth(x, y) = cfg.reloc_lambda_depth * sign(dd) * inv;
        }
    }
    return r;
}

std::array<int, 4> mask_bounds(const Mask &m) {
    int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m(x, y)) continue;
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    return {x0, y0, x1, y1};
}

template <typename T>
Image<T> crop(const Image<T> &img, const std::array<int, 4> &b) {
    Image<T> out(b[2] - b[0] + 1, b[3] - b[1] + 1, img.channels());
    for (int y = b[1]; y <= b[3]; ++y) {
        for (int x = b[0]; x <= b[2]; ++x) {
            for (int c = 0; c < img.channels(); ++c) out(x - b[0], y - b[1], c) = img(x, y, c);
        }
    }
    return out;
}

void require_frame(const FrameObservation &frame, const Intrinsics &K) {
    if (!frame.color.same_shape(K.width, K.height, 3) || !frame.depth.same_shape(K.width, K.height, 1)) {
        fail(Errc::ShapeMismatch, "frame does not match map intrinsics");
    }
}

} // namespace

RefineResult refine_pose(const GaussianMap &map, const FrameObservation &frame, const Pose &coarse,
                         const UpdateConfig &cfg) {
    const Intrinsics &K = map.intrinsics;
    require_frame(frame, K);
    RefineResult best;
    best.pose = coarse;
    Pose current = coarse;
    Vec6 m = Vec6::Zero(), v = Vec6::Zero();
    const double b1 = 0.9, b2 = 0.999, eps = 1e-10;
    Vec6 lr;
    lr << Vec3::Constant(cfg.reloc_lr_translation), Vec3::Constant(cfg.reloc_lr_rotation);
    for (int it = 0; it <= cfg.reloc_iterations; ++it) {
        const RenderOutput out = render_frame(map.gaussians, current, K);
        const PoseLoss pl = pose_loss(out, frame, cfg);
        if (pl.pixels == 0) {
            if (it == 0) fail(Errc::NoValidPixels, "silhouette mask is empty");
            break;
        }
        if (!std::isfinite(pl.loss)) fail(Errc::DivergedRefinement, "non-finite relocalization loss");
        if (it == 0) {
            best.initial_loss = best.loss = pl.loss;
        } else if (pl.loss < best.loss) {
            best.loss = pl.loss;
            best.pose = current;
            best.best_iteration = it;
        }
        if (it == cfg.reloc_iterations) break;
        const GradientSet g = render_gradients(map.gaussians, current, K, pl.g_color, pl.g_depth, true);
        const Vec6 grad = *g.pose;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(b1, it + 1), bc2 = 1.0 - std::pow(b2, it + 1);
        const Vec6 step = -lr.cwiseProduct((m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix()));
        current = retract(current, step);
    }
    if (best.loss > 1e3 * std::max(best.initial_loss, 1.0)) fail(Errc::DivergedRefinement, "relocalization diverged");
    return best;
}

std::vector<InstanceId> visible_instances(const GaussianMap &map, const Pose &pose, const Intrinsics &K,
                                          double fraction) {
    std::map<InstanceId, std::pair<std::size_t, std::size_t>> counts; // (visible, total)
    for (const auto &g : map.gaussians) {
        if (g.instance_id == kNoInstance || !map.has_instance(g.instance_id)) continue;
        auto &c = counts[g.instance_id];
        ++c.second;
        const Vec3 pc = world_to_camera(pose, g.center.cast<double>());
        if (!(pc.z() > kNearPlane)) continue;
        const double u = K.fx * pc.x() / pc.z() + K.cx, v = K.fy * pc.y() / pc.z() + K.cy;
        if (u >= -0.5 && u < K.width - 0.5 && v >= -0.5 && v < K.height - 0.5) ++c.first;
    }
    std::vector<InstanceId> out;
    for (const auto &[id, c] : counts) {
        if (c.second > 0 && static_cast<double>(c.first) / static_cast<double>(c.second) > fraction) out.push_back(id);
    }
    return out;
}

ChangeScores change_scores(const GaussianMap &map, InstanceId id, const FrameObservation &frame, const Pose &pose,
                           const RenderOutput &full, const EmbeddingProvider &embedder, const UpdateConfig &cfg) {
    const Intrinsics &K = map.intrinsics;
    require_frame(frame, K);
    const Mask mask = render_instance_mask(map, id, pose, K);
    ChangeScores s;
    s.id = id;
    std::size_t omega = 0, close = 0;
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            if (!mask(x, y) || !(full.depth(x, y) > 0.0) || !(frame.depth(x, y) > 0.0)) continue;
            ++omega;
            close += std::abs(full.depth(x, y) - frame.depth(x, y)) < cfg.depth_tolerance;
        }
    }
    if (omega == 0) fail(Errc::InsufficientEvidence, "no valid pixels for instance " + std::to_string(id));
    s.s_geo = static_cast<double>(close) / static_cast<double>(omega);
    const auto box = mask_bounds(mask);
    const ColorImage rendered_crop = crop(full.color, box), observed_crop = crop(frame.color, box);
    const Mask mask_crop = crop(mask, box);
    s.s_app = ssim(rendered_crop, observed_crop);
    const auto a = embedder.embed(rendered_crop, mask_crop);
    const auto b = embedder.embed(observed_crop, mask_crop);
    try {
        s.s_sem = sem_similarity(a, b);
    } catch (const Error &) {
        s.s_sem = 0.0;
    }
    s.s_change = cfg.w_geo * s.s_geo + cfg.w_app * s.s_app + cfg.w_sem * s.s_sem;
    return s;
}

ChangeDetection detect_changes(const GaussianMap &map, const FrameObservation &frame, const Pose &pose,
                               const EmbeddingProvider &embedder, const UpdateConfig &cfg) {
    ChangeDetection det;
    const RenderOutput full = render_frame(map.gaussians, pose, map.intrinsics);
    for (InstanceId id : visible_instances(map, pose, map.intrinsics, cfg.visible_fraction)) {
        try {
            const ChangeScores s = change_scores(map, id, frame, pose, full, embedder, cfg);
            det.scores.push_back(s);
            if (s.s_change < cfg.change_threshold) det.removed.push_back(id);
        } catch (const Error &e) {
            if (e.code() != Errc::InsufficientEvidence) throw;
            det.skipped.push_back(id);
        }
    }
    return det;
}

Mask remove_instances(GaussianMap &map, std::span<const InstanceId> ids, const Pose &pose) {
    const Intrinsics &K = map.intrinsics;
    for (InstanceId id : ids) map.instance(id);
    Mask removed(K.width, K.height, 1, 0);
    for (InstanceId id : ids) {
        const Mask m = render_instance_mask(map, id, pose, K);
        for (std::size_t i = 0; i < m.size(); ++i) removed.data()[i] |= m.data()[i];
    }
    for (InstanceId id : ids) map.remove_instance(id);
    return removed;
}

Mask dilate(const Mask &m, int radius) {
    Mask out(m.width(), m.height(), 1, 0);
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m(x, y)) continue;
            for (int yy = std::max(0, y - radius); yy <= std::min(m.height() - 1, y + radius); ++yy) {
                for (int xx = std::max(0, x - radius); xx <= std::min(m.width() - 1, x + radius); ++xx) out(xx, yy) = 1;
            }
        }
    }
    return out;
}

ResidualResult residual_detect(GaussianMap &map, const FrameObservation &frame, const Pose &pose, const Mask *region,
                               const AssociationConfig &assoc, const UpdateConfig &cfg, const OptimizerConfig &opt) {
    const Intrinsics &K = map.intrinsics;
    require_frame(frame, K);
    ResidualResult res;
    res.first_new_gaussian = map.gaussians.size();
    res.new_mask = Mask(K.width, K.height, 1, 0);

    std::vector<std::pair<InstanceId, Mask>> existing;
    for (const auto &[id, rec] : map.instances) existing.emplace_back(id, render_instance_mask(map, id, pose, K));

    const std::vector<VoxelHit> fresh = map.voxels.new_voxels_in_frustum(frame.depth, pose, K);

    std::vector<std::size_t> order(frame.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return count_set(frame.instances[a].mask) > count_set(frame.instances[b].mask);
    });
    std::unordered_map<std::uint32_t, InstanceId> label_to_instance;
    std::unordered_set<std::uint32_t> spawned_labels;
    for (std::size_t idx : order) {
        const InstanceObservation &obs = frame.instances[idx];
        double best_iou = 0.0;
        InstanceId overlap = kNoInstance;
        for (const auto &[id, m] : existing) {
            const double iou = mask_iou(obs.mask, m);
            if (iou > best_iou) {
                best_iou = iou;
                overlap = id;
            }
        }
        AssociationOutcome o;
        try {
            o = associate(map, obs, frame.depth, pose, assoc);
        } catch (const Error &e) {
            spdlog::debug("residual: label {} skipped: {}", obs.label, e.what());
            continue;
        }
        if (o.matched()) {
            label_to_instance[obs.label] = o.id;
        } else if (best_iou > cfg.reobservation_iou) {
            label_to_instance[obs.label] = overlap;
        } else {
            const InstanceId id = spawn_instance(map, obs, o.voxels, pose);
            label_to_instance[obs.label] = id;
            spawned_labels.insert(obs.label);
            res.spawned.push_back(id);
            for (std::size_t i = 0; i < obs.mask.size(); ++i) res.new_mask.data()[i] |= obs.mask.data()[i];
        }
    }

    Mask allowed = res.new_mask;
    if (region) {
        const Mask grown = dilate(*region, cfg.dilation_px);
        for (std::size_t i = 0; i < allowed.size(); ++i) allowed.data()[i] |= grown.data()[i];
    }
    std::vector<VoxelHit> seeds;
    std::set<VoxelKey> seeded;
    for (const VoxelHit &h : fresh) {
        if (allowed(h.x, h.y)) {
            seeds.push_back(h);
            seeded.insert(h.key);
        }
    }
    // previously observed voxels under a spawned mask that hold no Gaussians yet
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            const std::uint32_t label = frame.labels.empty() ? 0 : frame.labels(x, y);
            if (!spawned_labels.count(label)) continue;
            const double d = frame.depth(x, y);
            if (!(d > 0.0) || d > map.voxels.max_depth()) continue;
            const VoxelKey key = map.voxels.key_of(pose * (d * pixel_ray(x, y, K)));
            const VoxelCell *cell = map.voxels.find(key);
            if (!cell || !cell->gaussian_ids.empty() || seeded.count(key)) continue;
            seeds.push_back({key, x, y});
            seeded.insert(key);
        }
    }
    for (const VoxelHit &h : seeds) map.voxels.mark_observed(h.key);
    densify(map, seeds, frame, label_to_instance, opt);
    return res;
}

std::vector<double> masked_refine(GaussianMap &map, const Mask &update_mask, const Keyframe &kf, int iterations,
                                  std::size_t first_new, const OptimizerConfig &opt, const UpdateConfig &cfg) {
    if (count_set(update_mask) == 0 || iterations <= 0) return {};
    const Intrinsics &K = map.intrinsics;
    const Mask region = dilate(update_mask, cfg.dilation_px);
    std::vector<bool> trainable(map.gaussians.size(), false);
    for (std::size_t i = 0; i < map.gaussians.size(); ++i) {
        if (i >= first_new) {
            trainable[i] = true;
            continue;
        }
        const Vec3 pc = world_to_camera(kf.pose, map.gaussians[i].center.cast<double>());
        if (!(pc.z() > kNearPlane)) continue;
        const long u = std::lround(K.fx * pc.x() / pc.z() + K.cx);
        const long v = std::lround(K.fy * pc.y() / pc.z() + K.cy);
        if (u < 0 || v < 0 || u >= K.width || v >= K.height) continue;
        trainable[i] = region(static_cast<int>(u), static_cast<int>(v)) != 0;
    }
    GaussianOptimizer optimizer(opt);
    return optimizer.optimize(map, std::span(&kf, 1), iterations, &trainable, false);
}

ChangeReport run_update(GaussianMap &map, const FrameObservation &frame, PoseProvider &provider,
                        const EmbeddingProvider &embedder, const UpdateConfig &cfg, const AssociationConfig &assoc,
                        const OptimizerConfig &opt) {
    ChangeReport report;
    report.frame_id = frame.frame_id;
    report.coarse_pose = provider.coarse_pose(frame);
    report.refined_pose = refine_pose(map, frame, report.coarse_pose, cfg).pose;
    const ChangeDetection det = detect_changes(map, frame, report.refined_pose, embedder, cfg);
    report.scores = det.scores;
    report.removed = det.removed;
    const Mask removed_mask = remove_instances(map, det.removed, report.refined_pose);
    const ResidualResult res = residual_detect(map, frame, report.refined_pose, &removed_mask, assoc, cfg, opt);
    report.added = res.spawned;
    report.update_mask = removed_mask;
    for (std::size_t i = 0; i < report.update_mask.size(); ++i) report.update_mask.data()[i] |= res.new_mask.data()[i];
    Keyframe kf{frame.frame_id, report.refined_pose, frame.color, frame.depth};
    masked_refine(map, report.update_mask, kf, cfg.refine_iterations, res.first_new_gaussian, opt, cfg);
    return report;
}

} // namespace gsmind
