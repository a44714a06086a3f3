// SPDX-License-Identifier: Apache-2.0
#include "gsmind/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "json.hpp"
#include <spdlog/spdlog.h>

namespace gsmind {

using nlohmann::json;

const char *to_string(Role r) {
    switch (r) {
    case Role::Asset: return "Asset";
    case Role::Ordinary: return "Ordinary";
    case Role::Standalone: return "Standalone";
    }
    return "Standalone";
}

const char *to_string(Relation r) {
    switch (r) {
    case Relation::Supports: return "supports";
    case Relation::Contains: return "contains";
    case Relation::RootLink: return "root-link";
    }
    return "root-link";
}

std::optional<Role> parse_role(const std::string &text) {
    if (text == "Asset") return Role::Asset;
    if (text == "Ordinary") return Role::Ordinary;
    if (text == "Standalone") return Role::Standalone;
    return std::nullopt;
}

std::optional<Relation> parse_relation(const std::string &text) {
    if (text == "supports") return Relation::Supports;
    if (text == "contains") return Relation::Contains;
    if (text == "root-link") return Relation::RootLink;
    return std::nullopt;
}

Annotation ColorKeyAnnotator::describe(const ColorImage &crop, const Mask &mask, const std::string &) {
    require_same_extent(crop, mask, "crop and mask shapes differ");
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
    for (int y = 0; y < crop.height(); ++y) {
        for (int x = 0; x < crop.width(); ++x) {
            if (!mask(x, y)) continue;
            sum += Vec3(crop(x, y, 0), crop(x, y, 1), crop(x, y, 2));
            ++n;
        }
    }
    if (n == 0 || table_.empty()) return {"unknown", "", "Standalone"};
    auto chroma = [](const Vec3 &c) {
        const double s = c.sum();
        return s > 0.0 ? Vec3(c / s) : Vec3(Vec3::Constant(1.0 / 3.0));
    };
    const Vec3 query = chroma(sum / static_cast<double>(n));
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table_.size(); ++i) {
        const double d = (chroma(table_[i].color) - query).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return table_[best].annotation;
}

double view_quality(std::size_t mask_pixels, std::size_t image_pixels, std::size_t visible_gaussians,
                    std::size_t total_gaussians) {
    if (total_gaussians == 0) fail(Errc::EmptyInstance, "instance owns no Gaussians");
    if (image_pixels == 0) fail(Errc::InvalidArgument, "empty image domain");
    const double m = std::min(1.0, static_cast<double>(mask_pixels) / static_cast<double>(image_pixels));
    const double h = std::min(1.0, static_cast<double>(visible_gaussians) / static_cast<double>(total_gaussians));
    return m * h;
}

namespace {

std::size_t visible_count(const std::vector<GaussianSplat> &gs, const Pose &pose, const Intrinsics &K) {
    std::size_t n = 0;
    for (const auto &g : gs) {
        const Vec3 pc = world_to_camera(pose, g.center.cast<double>());
        if (!(pc.z() > kNearPlane)) continue;
        const double u = K.fx * pc.x() / pc.z() + K.cx;
        const double v = K.fy * pc.y() / pc.z() + K.cy;
        if (u >= -0.5 && u < K.width - 0.5 && v >= -0.5 && v < K.height - 0.5) ++n;
    }
    return n;
}

} // namespace

double view_quality(const GaussianMap &map, InstanceId id, const ObservingView &view) {
    map.instance(id);
    const auto gs = map.instance_gaussians(id);
    const auto &K = map.intrinsics;
    return view_quality(view.mask_pixels, static_cast<std::size_t>(K.width) * K.height,
                        visible_count(gs, view.pose, K), gs.size());
}

BestView best_view(const GaussianMap &map, InstanceId id, const GraphConfig &cfg) {
    const InstanceRecord &rec = map.instance(id);
    if (rec.views.empty()) fail(Errc::NoObservations, "instance " + std::to_string(id) + " has no views");
    Vec3 centroid = Vec3::Zero();
    for (const auto &v : rec.views) centroid += v.pose.translation;
    centroid /= static_cast<double>(rec.views.size());

    std::vector<std::size_t> order(rec.views.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto dist = [&](std::size_t i) { return (rec.views[i].pose.translation - centroid).squaredNorm(); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = dist(a), db = dist(b);
        if (da != db) return da < db;
        return rec.views[a].frame_id < rec.views[b].frame_id;
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(1, cfg.top_k_views))));

    const auto gs = map.instance_gaussians(id);
    const auto &K = map.intrinsics;
    BestView best;
    bool have = false;
    for (std::size_t i : order) {
        const auto &v = rec.views[i];
        const double q = gs.empty() ? 0.0
                                    : view_quality(v.mask_pixels, static_cast<std::size_t>(K.width) * K.height,
                                                   visible_count(gs, v.pose, K), gs.size());
        if (!have || q > best.quality || (q == best.quality && v.frame_id < best.frame_id)) {
            best = {v.frame_id, v.pose, q};
            have = true;
        }
    }
    return best;
}

Annotation annotate(const GaussianMap &map, InstanceId id, const BestView &view, AnnotatorClient &client) {
    const auto &K = map.intrinsics;
    const RenderOutput full = render_frame(map.gaussians, view.pose, K);
    const Mask mask = render_instance_mask(map, id, view.pose, K);
    int x0 = K.width, y0 = K.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) fail(Errc::AnnotationUnavailable, "instance not visible in its best view");
    const int w = x1 - x0 + 1, h = y1 - y0 + 1;
    ColorImage crop(w, h, 3);
    Mask crop_mask(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) crop(x, y, c) = full.color(x0 + x, y0 + y, c);
            crop_mask(x, y) = mask(x0 + x, y0 + y);
        }
    }
    Annotation a;
    try {
        a = client.describe(crop, crop_mask, kAnnotationPrompt);
    } catch (const Error &e) {
        fail(Errc::AnnotationUnavailable, e.what());
    } catch (const std::exception &e) {
        fail(Errc::AnnotationUnavailable, e.what());
    }
    if (!parse_role(a.role)) fail(Errc::AnnotationInvalid, "invalid role '" + a.role + "'");
    if (a.category.empty()) a.category = "unknown";
    return a;
}

SceneNode make_node(const GaussianMap &map, InstanceId id, AnnotatorClient &client, const GraphConfig &cfg) {
    const auto gs = map.instance_gaussians(id);
    if (gs.empty()) fail(Errc::EmptyInstance, "instance " + std::to_string(id) + " owns no Gaussians");
    SceneNode node;
    node.id = id;
    Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 mx = -mn;
    Vec3 sum = Vec3::Zero();
    for (const auto &g : gs) {
        const Vec3 c = g.center.cast<double>();
        sum += c;
        mn = mn.cwiseMin(c);
        mx = mx.cwiseMax(c);
    }
    node.center = sum / static_cast<double>(gs.size());
    node.bbox = {mn, mx};
    try {
        node.best_view = best_view(map, id, cfg);
        const Annotation a = annotate(map, id, *node.best_view, client);
        node.category = a.category;
        node.caption = a.caption;
        node.role = *parse_role(a.role);
    } catch (const Error &e) {
        if (e.code() != Errc::AnnotationUnavailable && e.code() != Errc::AnnotationInvalid &&
            e.code() != Errc::NoObservations) {
            throw;
        }
        spdlog::warn("annotation fallback for instance {}: {}", id, e.what());
        node.category = "unknown";
        node.caption.clear();
        node.role = Role::Standalone;
    }
    return node;
}

namespace {

int axis_u(int up) { return up == 0 ? 1 : 0; }
int axis_v(int up) { return up == 2 ? 1 : 2; }

double footprint_area(const Aabb &b, int up) {
    const int u = axis_u(up), v = axis_v(up);
    return std::max(0.0, b.max[u] - b.min[u]) * std::max(0.0, b.max[v] - b.min[v]);
}

double footprint_overlap(const Aabb &a, const Aabb &b, int up) {
    const int u = axis_u(up), v = axis_v(up);
    const double du = std::min(a.max[u], b.max[u]) - std::max(a.min[u], b.min[u]);
    const double dv = std::min(a.max[v], b.max[v]) - std::max(a.min[v], b.min[v]);
    return std::max(0.0, du) * std::max(0.0, dv);
}

} // namespace

std::vector<SceneEdge> infer_edges(const std::map<InstanceId, SceneNode> &nodes, const GraphConfig &cfg) {
    std::vector<SceneEdge> edges;
    const int up = cfg.up_axis;
    for (const auto &[ia, a] : nodes) {
        for (const auto &[ib, b] : nodes) {
            if (ia == ib) continue;
            const double vol_b = b.bbox.volume();
            if (vol_b > 0.0) {
                const double inside = aabb_intersection_volume(a.bbox, b.bbox) / vol_b;
                if (inside >= cfg.containment) {
                    edges.push_back({ia, ib, Relation::Contains, inside});
                    continue;
                }
            }
            const double area_b = footprint_area(b.bbox, up);
            if (!(area_b > 0.0)) continue;
            const double overlap = footprint_overlap(a.bbox, b.bbox, up) / area_b;
            const double gap = b.bbox.min[up] - a.bbox.max[up];
            if (overlap > cfg.support_overlap && gap >= cfg.support_gap_min && gap <= cfg.support_gap_max) {
                edges.push_back({ia, ib, Relation::Supports, overlap});
            }
        }
    }
    return edges;
}

SceneGraph build_hierarchy(std::map<InstanceId, SceneNode> nodes, std::vector<SceneEdge> edges) {
    for (auto &[id, n] : nodes) {
        n.parent = kRootId;
        n.relation = Relation::RootLink;
        if (n.role != Role::Ordinary) continue;
        double best = -1.0;
        for (const auto &e : edges) {
            if (e.child != id) continue;
            auto it = nodes.find(e.parent);
            if (it == nodes.end() || it->second.role != Role::Asset) continue;
            if (e.score > best || (e.score == best && e.parent < n.parent)) {
                best = e.score;
                n.parent = e.parent;
                n.relation = e.relation;
            }
        }
    }
    std::sort(edges.begin(), edges.end(), [](const SceneEdge &a, const SceneEdge &b) {
        return std::tie(a.parent, a.child) < std::tie(b.parent, b.child);
    });
    return {std::move(nodes), std::move(edges)};
}

SceneGraph build_graph(const GaussianMap &map, AnnotatorClient &client, const GraphConfig &cfg) {
    std::map<InstanceId, SceneNode> nodes;
    for (const auto &[id, rec] : map.instances) {
        if (map.owned_gaussians(id).empty()) continue;
        nodes.emplace(id, make_node(map, id, client, cfg));
    }
    auto edges = infer_edges(nodes, cfg);
    return build_hierarchy(std::move(nodes), std::move(edges));
}

SceneGraph sync(const SceneGraph &graph, std::span<const InstanceId> removed, std::vector<SceneNode> added,
                const GraphConfig &cfg) {
    std::set<InstanceId> drop;
    std::function<void(InstanceId)> drop_subtree = [&](InstanceId id) {
        if (!drop.insert(id).second) return;
        for (const auto &[cid, c] : graph.nodes) {
            if (c.parent == id) drop_subtree(cid);
        }
    };
    for (InstanceId id : removed) {
        auto it = graph.nodes.find(id);
        if (it == graph.nodes.end()) continue;
        if (it->second.role == Role::Asset) {
            drop_subtree(id);
        } else {
            drop.insert(id);
        }
    }
    std::map<InstanceId, SceneNode> nodes;
    for (const auto &[id, n] : graph.nodes) {
        if (!drop.count(id)) nodes.emplace(id, n);
    }
    for (auto &n : added) nodes[n.id] = std::move(n);
    auto edges = infer_edges(nodes, cfg);
    return build_hierarchy(std::move(nodes), std::move(edges));
}

SceneGraph sync(const SceneGraph &graph, std::span<const InstanceId> removed, std::span<const InstanceId> added,
                const GaussianMap &map, AnnotatorClient &client, const GraphConfig &cfg) {
    std::vector<SceneNode> nodes;
    for (InstanceId id : added) {
        if (!map.has_instance(id) || map.owned_gaussians(id).empty()) continue;
        nodes.push_back(make_node(map, id, client, cfg));
    }
    return sync(graph, removed, std::move(nodes), cfg);
}

bool graph_is_consistent(const SceneGraph &graph) {
    for (const auto &[id, n] : graph.nodes) {
        if (n.id != id) return false;
        std::set<InstanceId> seen{id};
        InstanceId cur = n.parent;
        while (cur != kRootId) {
            auto it = graph.nodes.find(cur);
            if (it == graph.nodes.end() || !seen.insert(cur).second) return false;
            cur = it->second.parent;
        }
        if (n.role == Role::Ordinary && n.parent != kRootId && graph.nodes.at(n.parent).role != Role::Asset) {
            return false;
        }
        if (n.role != Role::Ordinary && n.parent != kRootId) return false;
    }
    for (const auto &e : graph.edges) {
        if (!graph.nodes.count(e.parent) || !graph.nodes.count(e.child)) return false;
    }
    return true;
}

namespace {

json vec_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json &j) {
    if (!j.is_array() || j.size() != 3) fail(Errc::BadShape, "expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json pose_json(const Pose &p) {
    json m = json::array();
    const Mat4 mat = p.matrix();
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m.push_back(mat(r, c));
    }
    return m;
}

Pose pose_from(const json &j) {
    if (!j.is_array() || j.size() != 16) fail(Errc::BadShape, "expected 16 pose values");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = j[r * 4 + c].get<double>();
    }
    return Pose::from_matrix(m);
}

json id_json(InstanceId id) { return id == kRootId ? json("root") : json(id); }

InstanceId id_from(const json &j) {
    if (j.is_string() && j.get<std::string>() == "root") return kRootId;
    return j.get<InstanceId>();
}

} // namespace

std::string to_json(const SceneGraph &graph) {
    json nodes = json::array();
    for (const auto &[id, n] : graph.nodes) {
        json jn;
        jn["id"] = id;
        jn["center"] = vec_json(n.center);
        jn["bbox"] = {{"min", vec_json(n.bbox.min)}, {"max", vec_json(n.bbox.max)}};
        jn["category"] = n.category;
        jn["caption"] = n.caption;
        jn["role"] = to_string(n.role);
        jn["parent"] = id_json(n.parent);
        jn["relation"] = to_string(n.relation);
        if (n.best_view) {
            jn["best_view"] = {{"frame_id", n.best_view->frame_id},
                               {"pose", pose_json(n.best_view->pose)},
                               {"quality", n.best_view->quality}};
        } else {
            jn["best_view"] = nullptr;
        }
        nodes.push_back(std::move(jn));
    }
    json edges = json::array();
    for (const auto &e : graph.edges) {
        edges.push_back({{"parent", e.parent}, {"child", e.child}, {"relation", to_string(e.relation)},
                         {"score", e.score}});
    }
    json root = {{"root", "root"}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
    return root.dump(2) + "\n";
}

SceneGraph graph_from_json(const std::string &text) {
    SceneGraph g;
    try {
        const json root = json::parse(text);
        for (const auto &jn : root.at("nodes")) {
            SceneNode n;
            n.id = jn.at("id").get<InstanceId>();
            n.center = vec_from(jn.at("center"));
            n.bbox = {vec_from(jn.at("bbox").at("min")), vec_from(jn.at("bbox").at("max"))};
            n.category = jn.at("category").get<std::string>();
            n.caption = jn.at("caption").get<std::string>();
            const auto role = parse_role(jn.at("role").get<std::string>());
            if (!role) fail(Errc::AnnotationInvalid, "bad role in graph file");
            n.role = *role;
            n.parent = id_from(jn.at("parent"));
            const auto rel = parse_relation(jn.at("relation").get<std::string>());
            if (!rel) fail(Errc::BadShape, "bad relation in graph file");
            n.relation = *rel;
            if (jn.contains("best_view") && !jn["best_view"].is_null()) {
                const auto &bv = jn["best_view"];
                n.best_view = BestView{bv.at("frame_id").get<std::uint32_t>(), pose_from(bv.at("pose")),
                                       bv.at("quality").get<double>()};
            }
            g.nodes.emplace(n.id, std::move(n));
        }
        for (const auto &je : root.at("edges")) {
            const auto rel = parse_relation(je.at("relation").get<std::string>());
            if (!rel) fail(Errc::BadShape, "bad relation in graph file");
            g.edges.push_back({je.at("parent").get<InstanceId>(), je.at("child").get<InstanceId>(), *rel,
                               je.value("score", 0.0)});
        }
    } catch (const json::exception &e) {
        fail(Errc::BadShape, std::string("graph json: ") + e.what());
    }
    return g;
}

} // namespace gsmind
