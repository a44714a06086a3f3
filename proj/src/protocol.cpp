// SPDX-License-Identifier: Apache-2.0
#include "gsmind/protocol.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace gsmind {

namespace {

std::vector<const SceneObject *> movable(const SceneSpec &spec) {
    std::vector<const SceneObject *> out;
    for (const auto &o : spec.objects) {
        bool supports_other = false;
        for (const auto &p : spec.objects) {
            if (&p == &o) continue;
            const Aabb a = o.bounds(), b = p.bounds();
            const bool over = a.min.x() < b.max.x() && b.min.x() < a.max.x() && a.min.y() < b.max.y() &&
                              b.min.y() < a.max.y();
            if (over && std::abs(b.min.z() - a.max.z()) < 0.02) supports_other = true;
        }
        if (!supports_other) out.push_back(&o);
    }
    return out;
}

} // namespace

Edit make_removal(const SceneSpec &spec, std::size_t trial) {
    const auto cand = movable(spec);
    if (cand.empty()) fail(Errc::InvalidEdit, "no removable object");
    Edit e;
    e.kind = Edit::Kind::Remove;
    e.id = cand[trial % cand.size()]->id;
    return e;
}

Vec3 free_floor_position(const SceneSpec &spec, double r, double extent, std::mt19937_64 &rng,
                         std::uint32_t ignore_id) {
    std::uniform_real_distribution<double> u(-extent, extent);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const Vec3 p(u(rng), u(rng), spec.floor_height);
        bool ok = true;
        for (const auto &o : spec.objects) {
            if (o.id == ignore_id) continue;
            const Aabb b = o.bounds();
            const double margin = r + 0.06;
            if (p.x() > b.min.x() - margin && p.x() < b.max.x() + margin && p.y() > b.min.y() - margin &&
                p.y() < b.max.y() + margin) {
                ok = false;
                break;
            }
        }
        if (ok) return p;
    }
    fail(Errc::InvalidEdit, "no free floor position");
}

Edit make_addition(const SceneSpec &spec, std::mt19937_64 &rng) {
    static const std::vector<std::pair<std::string, Shape>> kinds{
        {"mug", Shape::Box}, {"box", Shape::Box}, {"bottle", Shape::Box}, {"bowl", Shape::Sphere}, {"vase", Shape::Sphere}};
    static const std::vector<std::pair<Vec3, std::string>> colors{
        {{0.85, 0.35, 0.70}, "pink"}, {{0.25, 0.75, 0.80}, "cyan"}, {{0.55, 0.30, 0.80}, "purple"},
        {{0.95, 0.55, 0.15}, "orange"}, {{0.20, 0.25, 0.30}, "dark"}};
    std::uniform_int_distribution<std::size_t> pick_kind(0, kinds.size() - 1), pick_color(0, colors.size() - 1);
    std::uniform_real_distribution<double> size(0.10, 0.16), yaw(-M_PI, M_PI);
    const auto &[cat, shape] = kinds[pick_kind(rng)];
    const auto &[color, color_name] = colors[pick_color(rng)];
    std::uint32_t id = 1;
    for (const auto &o : spec.objects) id = std::max(id, o.id + 1);
    SceneObject o;
    o.id = id;
    o.shape = shape;
    o.category = cat;
    o.caption = "a " + color_name + " " + cat;
    o.role = "Ordinary";
    o.color = color;
    if (shape == Shape::Sphere) {
        o.size = Vec3::Constant(size(rng));
    } else {
        const double s = size(rng);
        o.size = {s, 0.8 * s, 0.9 * s + 0.02};
        o.yaw = yaw(rng);
    }
    Vec3 p = free_floor_position(spec, 0.5 * o.size.head<2>().norm(), 0.55, rng);
    p.z() += 0.5 * o.size.z();
    o.position = p;
    Edit e;
    e.kind = Edit::Kind::Add;
    e.object = o;
    return e;
}

Edit make_movement(const SceneSpec &spec, std::size_t trial, std::mt19937_64 &rng) {
    const auto cand = movable(spec);
    if (cand.empty()) fail(Errc::InvalidEdit, "no movable object");
    const SceneObject &o = *cand[trial % cand.size()];
    const double r = 0.5 * (o.shape == Shape::Sphere ? o.size.x() : o.size.head<2>().norm());
    Vec3 p;
    for (int attempt = 0;; ++attempt) {
        p = free_floor_position(spec, r, 0.55, rng, o.id);
        // the new spot must not overlap the old footprint
        if ((p.head<2>() - o.position.head<2>()).norm() > 2.0 * r + 0.1 || attempt > 100) break;
    }
    p.z() = spec.floor_height + 0.5 * o.size.z();
    if (o.shape == Shape::Sphere) p.z() = spec.floor_height + 0.5 * o.size.x();
    Edit e;
    e.kind = Edit::Kind::Move;
    e.id = o.id;
    e.position = p;
    e.yaw = o.yaw + std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    return e;
}

Pose best_truth_view(const SceneSpec &spec, std::uint32_t object_id) {
    const auto poses = trajectory_poses(spec);
    std::size_t best = 0, best_n = 0;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto v = render_truth(spec, poses[i]);
        std::size_t n = 0;
        for (auto l : v.labels.data()) n += l == object_id;
        if (n > best_n) {
            best_n = n;
            best = i;
        }
    }
    if (poses.empty()) fail(Errc::InvalidArgument, "spec has no trajectory");
    return poses[best];
}

TrialOutcome run_trial(const GaussianMap &base, const SceneSpec &spec, const Edit &edit, std::uint64_t seed,
                       const TrialConfig &cfg) {
    TrialOutcome out;
    out.map = base;
    const SceneSpec after = apply_edits(spec, {edit});
    std::vector<Pose> views;
    std::uint32_t object_id = edit.kind == Edit::Kind::Add ? edit.object.id : edit.id;
    switch (edit.kind) {
    case Edit::Kind::Remove:
        out.trial.kind = UpdateTrial::Kind::Removal;
        views.push_back(best_truth_view(spec, object_id));
        break;
    case Edit::Kind::Add:
        out.trial.kind = UpdateTrial::Kind::Addition;
        views.push_back(best_truth_view(after, object_id));
        break;
    case Edit::Kind::Move:
        out.trial.kind = UpdateTrial::Kind::Movement;
        views.push_back(best_truth_view(spec, object_id));
        views.push_back(best_truth_view(after, object_id));
        break;
    }
    std::vector<InstanceId> old_instances;
    for (const auto &[id, label] : instance_truth_labels(base, spec)) {
        if (label == object_id && edit.kind != Edit::Kind::Add) old_instances.push_back(id);
    }
    MockPoseProvider provider(cfg.noise_translation, cfg.noise_rotation, seed);
    HistogramEmbedder embedder;
    std::vector<InstanceId> added;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const FrameObservation frame = synth_frame(after, views[v], static_cast<std::uint32_t>(100000 + v));
        ChangeReport r = run_update(out.map, frame, provider, embedder, cfg.update, cfg.assoc, cfg.opt);
        added.insert(added.end(), r.added.begin(), r.added.end());
        out.reports.push_back(std::move(r));
    }
    out.trial.removed = !old_instances.empty();
    for (InstanceId id : old_instances) out.trial.removed = out.trial.removed && !out.map.has_instance(id);
    if (const SceneObject *o = after.find(object_id)) {
        const Aabb truth = o->bounds();
        for (InstanceId id : added) {
            const auto b = out.map.has_instance(id) ? instance_bounds(out.map, id) : std::nullopt;
            if (b && aabb_iou(*b, truth) >= cfg.addition_iou) out.trial.added = true;
        }
    }
    return out;
}

} // namespace gsmind
