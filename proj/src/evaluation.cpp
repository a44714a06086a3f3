// SPDX-License-Identifier: Apache-2.0
#include "gsmind/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gsmind/instance_engine.hpp"
#include "gsmind/losses.hpp"
#include "gsmind/render.hpp"

namespace gsmind {

SegmentationMetrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion,
                                           std::vector<std::string> classes) {
    const std::size_t n = confusion.size();
    for (const auto &row : confusion) {
        if (row.size() != n) fail(Errc::BadShape, "confusion matrix must be square");
    }
    if (classes.size() != n) fail(Errc::BadShape, "class list does not match the confusion matrix");
    SegmentationMetrics m;
    std::size_t total = 0, present = 0;
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t p = 0; p < n; ++p) total += confusion[c][p];
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t truth = 0, pred = 0;
        for (std::size_t k = 0; k < n; ++k) {
            truth += confusion[c][k];
            pred += confusion[k][c];
        }
        if (truth == 0) continue;
        ++present;
        const double tp = static_cast<double>(confusion[c][c]);
        const double iou = tp / static_cast<double>(truth + pred - confusion[c][c]);
        m.macc += tp / static_cast<double>(truth);
        m.miou += iou;
        m.fmiou += static_cast<double>(truth) / static_cast<double>(total) * iou;
    }
    if (present > 0) {
        m.macc /= static_cast<double>(present);
        m.miou /= static_cast<double>(present);
    }
    m.classes = std::move(classes);
    m.confusion = std::move(confusion);
    return m;
}

namespace {

double box_surface_distance(const SceneObject &o, const Vec3 &p) {
    const double c = std::cos(o.yaw), s = std::sin(o.yaw);
    const Vec3 d = p - o.position;
    const Vec3 q(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
    const Vec3 h = 0.5 * o.size;
    const Vec3 e = q.cwiseAbs() - h;
    const double outside = e.cwiseMax(0.0).norm();
    const double inside = std::min(e.maxCoeff(), 0.0);
    return std::abs(outside + inside);
}

} // namespace

std::uint32_t nearest_surface_label(const SceneSpec &spec, const Vec3 &p) {
    double best = std::abs(p.z() - spec.floor_height);
    std::uint32_t label = 0;
    for (const auto &o : spec.objects) {
        const double d = o.shape == Shape::Box ? box_surface_distance(o, p)
                                               : std::abs((p - o.position).norm() - 0.5 * o.size.x());
        if (d < best) {
            best = d;
            label = o.id;
        }
    }
    return label;
}

std::string predicted_category(const GaussianMap &map, InstanceId id, const SceneSpec &spec) {
    if (!map.has_instance(id)) return "background";
    const auto &F = map.instance(id).feature;
    double best = -std::numeric_limits<double>::infinity();
    std::string cat = "background";
    for (const auto &c : spec.categories) {
        double s;
        try {
            s = sem_similarity(category_embedding(spec, c), F);
        } catch (const Error &) {
            continue;
        }
        if (s > best) {
            best = s;
            cat = c;
        }
    }
    return cat;
}

SegmentationMetrics eval_segmentation(const GaussianMap &map, const SceneSpec &spec) {
    std::vector<std::string> classes{"background"};
    for (const auto &c : spec.categories) {
        if (c != "background") classes.push_back(c);
    }
    auto index_of = [&](const std::string &c) {
        return static_cast<std::size_t>(std::find(classes.begin(), classes.end(), c) - classes.begin());
    };
    std::map<InstanceId, std::size_t> pred_class;
    for (const auto &[id, rec] : map.instances) pred_class[id] = index_of(predicted_category(map, id, spec));
    std::vector<std::vector<std::size_t>> conf(classes.size(), std::vector<std::size_t>(classes.size(), 0));
    for (const auto &g : map.gaussians) {
        const std::uint32_t label = nearest_surface_label(spec, g.center.cast<double>());
        std::size_t truth = 0;
        if (label != 0) {
            const SceneObject *o = spec.find(label);
            truth = index_of(o->category);
        }
        auto it = pred_class.find(g.instance_id);
        const std::size_t pred = it == pred_class.end() ? 0 : it->second;
        if (truth < classes.size() && pred < classes.size()) ++conf[truth][pred];
    }
    return metrics_from_confusion(std::move(conf), std::move(classes));
}

double psnr(const ColorImage &a, const ColorImage &b) {
    if (!a.same_shape(b.width(), b.height(), b.channels())) fail(Errc::ShapeMismatch, "psnr: shapes differ");
    if (a.empty()) fail(Errc::InvalidArgument, "psnr of empty images");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::clamp(a.data()[i], 0.0, 1.0) - std::clamp(b.data()[i], 0.0, 1.0);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

PhotometricMetrics eval_photometric(const GaussianMap &map, std::span<const Pose> poses,
                                    std::span<const ColorImage> truth) {
    if (poses.size() != truth.size()) fail(Errc::InvalidArgument, "pose and image counts differ");
    PhotometricMetrics m;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        ColorImage r = render_frame(map.gaussians, poses[i], map.intrinsics).color;
        for (auto &v : r.data()) v = std::clamp(v, 0.0, 1.0);
        const double p = psnr(r, truth[i]);
        m.per_view_psnr.push_back(p);
        m.psnr += p;
        m.ssim += ssim(r, truth[i]);
    }
    if (!poses.empty()) {
        m.psnr /= static_cast<double>(poses.size());
        m.ssim /= static_cast<double>(poses.size());
    }
    return m;
}

std::vector<double> eval_grounding(const std::vector<std::optional<Aabb>> &predicted, const std::vector<Aabb> &truth,
                                   const std::vector<double> &thresholds) {
    if (predicted.size() != truth.size()) fail(Errc::InvalidArgument, "prediction and truth counts differ");
    std::vector<double> ap(thresholds.size(), 0.0);
    if (truth.empty()) return ap;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (predicted[i] && aabb_iou(*predicted[i], truth[i]) >= thresholds[t]) ++hits;
        }
        ap[t] = static_cast<double>(hits) / static_cast<double>(truth.size());
    }
    return ap;
}

bool trial_success(const UpdateTrial &t) {
    switch (t.kind) {
    case UpdateTrial::Kind::Removal: return t.removed;
    case UpdateTrial::Kind::Addition: return t.added;
    case UpdateTrial::Kind::Movement: return t.removed && t.added;
    }
    return false;
}

double eval_updates(const std::vector<UpdateTrial> &trials) {
    if (trials.empty()) return 0.0;
    const auto ok = std::count_if(trials.begin(), trials.end(), trial_success);
    return static_cast<double>(ok) / static_cast<double>(trials.size());
}

std::optional<Aabb> instance_bounds(const GaussianMap &map, InstanceId id) {
    bool any = false;
    Aabb b{Vec3::Constant(std::numeric_limits<double>::infinity()), Vec3::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto &g : map.gaussians) {
        if (g.instance_id != id) continue;
        const Vec3 c = g.center.cast<double>();
        b.min = b.min.cwiseMin(c);
        b.max = b.max.cwiseMax(c);
        any = true;
    }
    if (!any) return std::nullopt;
    return b;
}

std::map<InstanceId, std::uint32_t> instance_truth_labels(const GaussianMap &map, const SceneSpec &spec) {
    std::map<InstanceId, std::map<std::uint32_t, std::size_t>> votes;
    for (const auto &g : map.gaussians) {
        if (!map.has_instance(g.instance_id)) continue;
        ++votes[g.instance_id][nearest_surface_label(spec, g.center.cast<double>())];
    }
    std::map<InstanceId, std::uint32_t> out;
    for (const auto &[id, v] : votes) {
        auto best = std::max_element(v.begin(), v.end(), [](const auto &a, const auto &b) { return a.second < b.second; });
        out[id] = best->first;
    }
    return out;
}

RecoveryReport instance_recovery(const GaussianMap &map, const SceneSpec &spec, double min_purity) {
    RecoveryReport r;
    r.objects = spec.objects.size();
    std::map<InstanceId, std::map<std::uint32_t, std::size_t>> votes;
    for (const auto &g : map.gaussians) {
        if (!map.has_instance(g.instance_id)) continue;
        ++votes[g.instance_id][nearest_surface_label(spec, g.center.cast<double>())];
    }
    r.instances = 0;
    std::map<std::uint32_t, std::size_t> per_object;
    bool pure = true;
    for (const auto &[id, rec] : map.instances) {
        auto vit = votes.find(id);
        if (vit == votes.end()) continue; // no Gaussians: not a recovered instance
        ++r.instances;
        std::size_t total = 0;
        for (const auto &[l, n] : vit->second) total += n;
        auto best = std::max_element(vit->second.begin(), vit->second.end(),
                                     [](const auto &a, const auto &b) { return a.second < b.second; });
        r.assignment[id] = best->first;
        if (best->first == 0 || static_cast<double>(best->second) < min_purity * static_cast<double>(total)) {
            pure = false;
        }
        ++per_object[best->first];
    }
    bool bijective = r.instances == r.objects;
    for (const auto &o : spec.objects) bijective = bijective && per_object[o.id] == 1;
    r.exact = bijective && pure;
    return r;
}

} // namespace gsmind
