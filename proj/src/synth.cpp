// SPDX-License-Identifier: Apache-2.0
#include "gsmind/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "json.hpp"

#include "gsmind/image_io.hpp"

namespace gsmind {

using nlohmann::json;

namespace {

Mat3 rot_z(double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

constexpr double kEps = 1e-9;

struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::UnitZ();
    Vec3 albedo = Vec3::Zero();
    std::uint32_t label = 0;
};

bool hit_box(const SceneObject &o, const Vec3 &origin, const Vec3 &dir, double &t, Vec3 &n) {
    const Mat3 r = rot_z(o.yaw);
    const Vec3 p = r.transpose() * (origin - o.position);
    const Vec3 d = r.transpose() * dir;
    const Vec3 h = 0.5 * o.size;
    double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
    int axis = -1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (p[a] < -h[a] || p[a] > h[a]) return false;
            continue;
        }
        double t1 = (-h[a] - p[a]) / d[a], t2 = (h[a] - p[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > tmin) {
            tmin = t1;
            axis = a;
        }
        tmax = std::min(tmax, t2);
    }
    if (tmax < tmin || tmin <= kEps || axis < 0) return false;
    Vec3 ln = Vec3::Zero();
    ln[axis] = d[axis] > 0 ? -1.0 : 1.0;
    t = tmin;
    n = r * ln;
    return true;
}

bool hit_sphere(const SceneObject &o, const Vec3 &origin, const Vec3 &dir, double &t, Vec3 &n) {
    const double r = 0.5 * o.size.x();
    const Vec3 oc = origin - o.position;
    const double a = dir.squaredNorm(), b = 2.0 * oc.dot(dir), c = oc.squaredNorm() - r * r;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return false;
    const double sq = std::sqrt(disc);
    double tt = (-b - sq) / (2 * a);
    if (tt <= kEps) return false;
    t = tt;
    n = (origin + tt * dir - o.position).normalized();
    return true;
}

Vec3 floor_albedo(double x, double y) {
    const double v = 1.0 + 0.14 * std::sin(2 * M_PI * x / 0.55) * std::cos(2 * M_PI * y / 0.65) +
                     0.07 * std::sin(2 * M_PI * (x + 0.6 * y) / 0.9);
    return Vec3(0.56, 0.54, 0.50) * v;
}

RayHit cast(const SceneSpec &spec, const Vec3 &origin, const Vec3 &dir) {
    RayHit best;
    for (const auto &o : spec.objects) {
        double t;
        Vec3 n;
        const bool ok = o.shape == Shape::Box ? hit_box(o, origin, dir, t, n) : hit_sphere(o, origin, dir, t, n);
        if (ok && t < best.t) {
            best = {t, n, o.color, o.id};
        }
    }
    if (std::abs(dir.z()) > 1e-15) {
        const double t = (spec.floor_height - origin.z()) / dir.z();
        if (t > kEps && t < best.t) {
            const Vec3 p = origin + t * dir;
            if (std::abs(p.x()) <= spec.floor_half_extent && std::abs(p.y()) <= spec.floor_half_extent) {
                best = {t, Vec3::UnitZ(), floor_albedo(p.x(), p.y()), 0};
            }
        }
    }
    return best;
}

Vec3 shade(const RayHit &h) {
    static const Vec3 light = Vec3(0.3, 0.2, 1.0).normalized();
    return h.albedo * (0.45 + 0.55 * std::max(0.0, h.normal.dot(light)));
}

} // namespace

Aabb SceneObject::bounds() const {
    if (shape == Shape::Sphere) {
        const Vec3 r = Vec3::Constant(0.5 * size.x());
        return {position - r, position + r};
    }
    const Mat3 r = rot_z(yaw);
    Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity()), mx = -mn;
    for (int i = 0; i < 8; ++i) {
        const Vec3 corner(i & 1 ? 0.5 : -0.5, i & 2 ? 0.5 : -0.5, i & 4 ? 0.5 : -0.5);
        const Vec3 p = position + r * corner.cwiseProduct(size);
        mn = mn.cwiseMin(p);
        mx = mx.cwiseMax(p);
    }
    return {mn, mx};
}

Intrinsics SceneSpec::intrinsics() const {
    Intrinsics K;
    K.width = width;
    K.height = height;
    K.fx = K.fy = focal;
    K.cx = 0.5 * (width - 1);
    K.cy = 0.5 * (height - 1);
    return K;
}

std::size_t SceneSpec::category_index(const std::string &category) const {
    auto it = std::find(categories.begin(), categories.end(), category);
    if (it == categories.end()) fail(Errc::InvalidArgument, "unknown category '" + category + "'");
    return static_cast<std::size_t>(it - categories.begin());
}

const SceneObject *SceneSpec::find(std::uint32_t id) const {
    for (const auto &o : objects) {
        if (o.id == id) return &o;
    }
    return nullptr;
}

std::vector<std::string> default_categories() {
    return {"desk", "cabinet", "book", "ball", "mug", "box", "lamp", "plant", "bottle", "bowl", "vase", "chair"};
}

SceneSpec default_scene(std::uint64_t seed) {
    SceneSpec s;
    s.seed = seed;
    s.categories = default_categories();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> j(-1.0, 1.0);
    const double fz = s.floor_height;

    SceneObject desk;
    desk.id = 1;
    desk.size = {0.56, 0.36, 0.18};
    desk.position = {-0.12 + 0.03 * j(rng), 0.08 + 0.03 * j(rng), fz + 0.09};
    desk.yaw = 0.2 * j(rng);
    desk.color = {0.70, 0.50, 0.32};
    desk.category = "desk";
    desk.caption = "a low wooden desk";
    desk.role = "Asset";

    SceneObject cabinet;
    cabinet.id = 2;
    cabinet.size = {0.24, 0.24, 0.36};
    cabinet.position = {0.36 + 0.03 * j(rng), -0.32 + 0.03 * j(rng), fz + 0.18};
    cabinet.yaw = 0.3 * j(rng);
    cabinet.color = {0.30, 0.45, 0.75};
    cabinet.category = "cabinet";
    cabinet.caption = "a blue storage cabinet";
    cabinet.role = "Asset";

    const double top = fz + desk.size.z();
    const Mat3 rd = rot_z(desk.yaw);
    SceneObject red;
    red.id = 3;
    red.size = {0.16, 0.11, 0.06};
    red.position = desk.position + rd * Vec3(-0.12 + 0.02 * j(rng), 0.03 + 0.02 * j(rng), 0.0);
    red.position.z() = top + 0.5 * red.size.z();
    red.yaw = desk.yaw + 0.4 * j(rng);
    red.color = {0.80, 0.25, 0.22};
    red.category = "book";
    red.caption = "a red hardcover book";
    red.role = "Ordinary";

    SceneObject green;
    green.id = 4;
    green.size = {0.14, 0.10, 0.08};
    green.position = desk.position + rd * Vec3(0.13 + 0.02 * j(rng), -0.04 + 0.02 * j(rng), 0.0);
    green.position.z() = top + 0.5 * green.size.z();
    green.yaw = desk.yaw + 0.4 * j(rng);
    green.color = {0.30, 0.68, 0.35};
    green.category = "book";
    green.caption = "a green paperback book";
    green.role = "Ordinary";

    SceneObject ball;
    ball.id = 5;
    ball.shape = Shape::Sphere;
    ball.size = Vec3::Constant(0.16);
    ball.position = {0.34 + 0.03 * j(rng), 0.36 + 0.03 * j(rng), fz + 0.08};
    ball.color = {0.88, 0.78, 0.22};
    ball.category = "ball";
    ball.caption = "a yellow rubber ball";
    ball.role = "Standalone";

    s.objects = {desk, cabinet, red, green, ball};
    s.trajectory.start_angle = 0.5 * j(rng);
    return s;
}

namespace {

Pose orbit_pose(const Trajectory &t, double angle) {
    const Vec3 eye = t.target + Vec3(t.radius * std::cos(angle), t.radius * std::sin(angle), t.height - t.target.z());
    return look_at(eye, t.target, Vec3::UnitZ());
}

} // namespace

std::vector<Pose> trajectory_poses(const SceneSpec &spec) {
    const Trajectory &t = spec.trajectory;
    std::vector<Pose> poses;
    for (int i = 0; i < t.frames; ++i) {
        if (t.kind == Trajectory::Kind::Orbit) {
            poses.push_back(orbit_pose(t, t.start_angle + t.sweep * i / t.frames));
        } else {
            const double a = t.frames > 1 ? static_cast<double>(i) / (t.frames - 1) : 0.0;
            poses.push_back(look_at(t.start + a * (t.end - t.start), t.target, Vec3::UnitZ()));
        }
    }
    return poses;
}

std::vector<Pose> held_out_poses(const SceneSpec &spec, int count) {
    const Trajectory &t = spec.trajectory;
    std::vector<Pose> poses;
    for (int i = 0; i < count; ++i) {
        const int k = t.frames * i / std::max(count, 1);
        poses.push_back(orbit_pose(t, t.start_angle + t.sweep * (k + 0.5) / t.frames));
    }
    return poses;
}

TruthView render_truth(const SceneSpec &spec, const Pose &pose) {
    const Intrinsics K = spec.intrinsics();
    TruthView v{ColorImage(K.width, K.height, 3, 0.0), DepthImage(K.width, K.height, 1, 0.0),
                LabelImage(K.width, K.height, 1, 0)};
    const Vec3 origin = pose.translation;
    constexpr double kOffsets[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            const RayHit center = cast(spec, origin, pose.rotation * pixel_ray(x, y, K));
            if (std::isfinite(center.t)) {
                v.depth(x, y) = center.t;
                v.labels(x, y) = center.label;
            }
            Vec3 sum = Vec3::Zero();
            for (double oy : kOffsets) {
                for (double ox : kOffsets) {
                    const RayHit h = cast(spec, origin, pose.rotation * pixel_ray(x + ox, y + oy, K));
                    if (std::isfinite(h.t)) sum += shade(h);
                }
            }
            for (int c = 0; c < 3; ++c) v.color(x, y, c) = std::clamp(sum[c] / 9.0, 0.0, 1.0);
        }
    }
    return v;
}

std::vector<float> synthetic_feature(const SceneSpec &spec, const std::string &category, std::uint32_t frame_id,
                                      std::uint32_t object_id) {
    const std::size_t c = spec.category_index(category);
    if (c >= spec.feature_dim) fail(Errc::InvalidArgument, "feature_dim smaller than the category table");
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), frame_id,
                      object_id, 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, spec.feature_noise);
    std::vector<double> v(spec.feature_dim);
    for (auto &x : v) x = noise(rng);
    v[c] += 1.0;
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
    return out;
}

std::vector<float> category_embedding(const SceneSpec &spec, const std::string &category) {
    std::vector<float> v(spec.feature_dim, 0.0f);
    v.at(spec.category_index(category)) = 1.0f;
    return v;
}

FrameObservation synth_frame(const SceneSpec &spec, const Pose &pose, std::uint32_t frame_id) {
    TruthView t = render_truth(spec, pose);
    FrameObservation f;
    f.frame_id = frame_id;
    f.pose = pose;
    f.color = std::move(t.color);
    for (auto &c : f.color.data()) c = quantize_u8(c);
    f.depth = std::move(t.depth);
    for (auto &d : f.depth.data()) d = quantize_depth(d, 1000.0);
    f.labels = std::move(t.labels);
    for (const auto &o : spec.objects) {
        Mask m = label_mask(f.labels, o.id);
        const std::size_t n = count_set(m);
        if (n == 0) continue;
        if (static_cast<int>(n) < spec.min_mask_pixels) {
            // too small to detect: becomes background
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (m.data()[i]) f.labels.data()[i] = 0;
            }
            continue;
        }
        InstanceObservation obs;
        obs.label = o.id;
        obs.mask = std::move(m);
        obs.feature = synthetic_feature(spec, o.category, frame_id, o.id);
        obs.frame_id = frame_id;
        obs.class_hint = o.category;
        f.instances.push_back(std::move(obs));
    }
    return f;
}

SynthResult gen_scene(const SceneSpec &spec) {
    SynthResult r;
    r.bundle.meta.intrinsics = spec.intrinsics();
    r.bundle.meta.feature_dim = spec.feature_dim;
    r.bundle.meta.depth_scale = 1000.0;
    r.truth.spec = spec;
    r.truth.poses = trajectory_poses(spec);
    for (std::size_t i = 0; i < r.truth.poses.size(); ++i) {
        r.bundle.frames.push_back(synth_frame(spec, r.truth.poses[i], static_cast<std::uint32_t>(i)));
    }
    return r;
}

SceneSpec apply_edits(const SceneSpec &spec, const EditScript &script) {
    SceneSpec out = spec;
    for (const Edit &e : script) {
        auto it = std::find_if(out.objects.begin(), out.objects.end(),
                               [&](const SceneObject &o) { return o.id == (e.kind == Edit::Kind::Add ? e.object.id : e.id); });
        switch (e.kind) {
        case Edit::Kind::Remove:
            if (it == out.objects.end()) fail(Errc::InvalidEdit, "remove of unknown object " + std::to_string(e.id));
            out.objects.erase(it);
            break;
        case Edit::Kind::Move:
            if (it == out.objects.end()) fail(Errc::InvalidEdit, "move of unknown object " + std::to_string(e.id));
            it->position = e.position;
            it->yaw = e.yaw;
            break;
        case Edit::Kind::Add:
            if (it != out.objects.end() || e.object.id == 0) {
                fail(Errc::InvalidEdit, "add with taken id " + std::to_string(e.object.id));
            }
            out.objects.push_back(e.object);
            break;
        }
    }
    return out;
}

SynthResult mutate(const SceneSpec &spec, const EditScript &script) { return gen_scene(apply_edits(spec, script)); }

std::vector<ColorKey> annotation_table(const SceneSpec &spec) {
    std::vector<ColorKey> table;
    for (const auto &o : spec.objects) table.push_back({o.color, {o.category, o.caption, o.role}});
    return table;
}

namespace {

json v3(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 v3(const json &j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json object_json(const SceneObject &o) {
    return {{"id", o.id},
            {"shape", o.shape == Shape::Box ? "box" : "sphere"},
            {"size", v3(o.size)},
            {"position", v3(o.position)},
            {"yaw", o.yaw},
            {"color", v3(o.color)},
            {"category", o.category},
            {"caption", o.caption},
            {"role", o.role}};
}

SceneObject object_from(const json &jo) {
    SceneObject o;
    o.id = jo.at("id").get<std::uint32_t>();
    const auto shape = jo.value("shape", std::string("box"));
    if (shape != "box" && shape != "sphere") fail(Errc::BadShape, "unknown shape " + shape);
    o.shape = shape == "box" ? Shape::Box : Shape::Sphere;
    o.size = v3(jo.at("size"));
    o.position = v3(jo.at("position"));
    o.yaw = jo.value("yaw", 0.0);
    o.color = v3(jo.at("color"));
    o.category = jo.at("category").get<std::string>();
    o.caption = jo.value("caption", std::string());
    o.role = jo.value("role", std::string("Standalone"));
    return o;
}

} // namespace

std::string spec_to_json(const SceneSpec &s) {
    json objs = json::array();
    for (const auto &o : s.objects) objs.push_back(object_json(o));
    const Trajectory &t = s.trajectory;
    json traj = {{"kind", t.kind == Trajectory::Kind::Orbit ? "orbit" : "linear"},
                 {"frames", t.frames},
                 {"target", v3(t.target)},
                 {"radius", t.radius},
                 {"height", t.height},
                 {"start_angle", t.start_angle},
                 {"sweep", t.sweep},
                 {"start", v3(t.start)},
                 {"end", v3(t.end)}};
    json j = {{"seed", s.seed},
              {"floor_half_extent", s.floor_half_extent},
              {"floor_height", s.floor_height},
              {"objects", std::move(objs)},
              {"trajectory", std::move(traj)},
              {"width", s.width},
              {"height", s.height},
              {"focal", s.focal},
              {"feature_dim", s.feature_dim},
              {"feature_noise", s.feature_noise},
              {"min_mask_pixels", s.min_mask_pixels},
              {"categories", s.categories}};
    return j.dump(2) + "\n";
}

SceneSpec spec_from_json(const std::string &text) {
    SceneSpec s;
    try {
        const json j = json::parse(text);
        s.seed = j.value("seed", std::uint64_t{0});
        s.floor_half_extent = j.value("floor_half_extent", s.floor_half_extent);
        s.floor_height = j.value("floor_height", s.floor_height);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.focal = j.value("focal", s.focal);
        s.feature_dim = j.value("feature_dim", s.feature_dim);
        s.feature_noise = j.value("feature_noise", s.feature_noise);
        s.min_mask_pixels = j.value("min_mask_pixels", s.min_mask_pixels);
        s.categories = j.contains("categories") ? j["categories"].get<std::vector<std::string>>() : default_categories();
        if (j.contains("objects")) {
            for (const auto &jo : j["objects"]) s.objects.push_back(object_from(jo));
        }
        if (j.contains("trajectory")) {
            const auto &jt = j["trajectory"];
            Trajectory &t = s.trajectory;
            t.kind = jt.value("kind", std::string("orbit")) == "linear" ? Trajectory::Kind::Linear : Trajectory::Kind::Orbit;
            t.frames = jt.value("frames", t.frames);
            if (jt.contains("target")) t.target = v3(jt["target"]);
            t.radius = jt.value("radius", t.radius);
            t.height = jt.value("height", t.height);
            t.start_angle = jt.value("start_angle", t.start_angle);
            t.sweep = jt.value("sweep", t.sweep);
            if (jt.contains("start")) t.start = v3(jt["start"]);
            if (jt.contains("end")) t.end = v3(jt["end"]);
        }
    } catch (const json::exception &e) {
        fail(Errc::BadShape, std::string("scene spec: ") + e.what());
    }
    return s;
}

std::string edits_to_json(const EditScript &script) {
    json a = json::array();
    for (const auto &e : script) {
        switch (e.kind) {
        case Edit::Kind::Remove:
            a.push_back({{"op", "remove"}, {"id", e.id}});
            break;
        case Edit::Kind::Add:
            a.push_back({{"op", "add"}, {"object", object_json(e.object)}});
            break;
        case Edit::Kind::Move:
            a.push_back({{"op", "move"}, {"id", e.id}, {"position", v3(e.position)}, {"yaw", e.yaw}});
            break;
        }
    }
    return a.dump(2) + "\n";
}

EditScript edits_from_json(const std::string &text) {
    EditScript script;
    try {
        for (const auto &je : json::parse(text)) {
            Edit e;
            const auto op = je.at("op").get<std::string>();
            if (op == "remove") {
                e.kind = Edit::Kind::Remove;
                e.id = je.at("id").get<std::uint32_t>();
            } else if (op == "add") {
                e.kind = Edit::Kind::Add;
                e.object = object_from(je.at("object"));
            } else if (op == "move") {
                e.kind = Edit::Kind::Move;
                e.id = je.at("id").get<std::uint32_t>();
                e.position = v3(je.at("position"));
                e.yaw = je.value("yaw", 0.0);
            } else {
                fail(Errc::BadShape, "unknown edit op " + op);
            }
            script.push_back(std::move(e));
        }
    } catch (const json::exception &e) {
        fail(Errc::BadShape, std::string("edit script: ") + e.what());
    }
    return script;
}

} // namespace gsmind
