// SPDX-License-Identifier: Apache-2.0
#include "gsmind/mind.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gsmind/instance_engine.hpp"
#include "gsmind/render.hpp"

namespace gsmind {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
    for (char &c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> tokens(const std::string &text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : lower(text)) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += c;
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

const std::set<std::string> &stopwords() {
    static const std::set<std::string> s{"the", "a", "an", "find", "locate", "show", "me", "please", "that", "is",
                                         "which", "object", "thing", "of", "to", "top"};
    return s;
}

std::string join_content(const std::vector<std::string> &words) {
    std::string out;
    for (const auto &w : words) {
        if (stopwords().count(w)) continue;
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::string line_value(const std::string &prompt, const std::string &key) {
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key, 0) == 0) return line.substr(key.size());
    }
    return {};
}

std::optional<long long> first_integer(const std::string &s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(s[i]))) {
            std::size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            if (j - i > 9) return std::nullopt;
            return std::stoll(s.substr(i, j - i));
        }
    }
    return std::nullopt;
}

std::string mock_parse(const std::string &prompt) {
    const std::vector<std::string> words = tokens(line_value(prompt, "QUERY: "));
    static const std::vector<std::vector<std::string>> relations{
        {"on", "top", "of"}, {"next", "to"}, {"in", "front", "of"}, {"left", "of"}, {"right", "of"},
        {"close", "to"},     {"on"},         {"near"},               {"beside"},     {"under"},
        {"inside"},          {"in"},         {"by"},                 {"behind"},     {"above"}};
    std::vector<std::vector<std::string>> parts(1);
    for (std::size_t i = 0; i < words.size();) {
        std::size_t matched = 0;
        for (const auto &rel : relations) {
            if (i + rel.size() <= words.size() && std::equal(rel.begin(), rel.end(), words.begin() + i)) {
                matched = rel.size();
                break;
            }
        }
        if (matched) {
            parts.emplace_back();
            i += matched;
        } else {
            parts.back().push_back(words[i++]);
        }
    }
    json reply;
    reply["target"] = join_content(parts[0]);
    json anchors = json::array();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const std::string a = join_content(parts[p]);
        if (!a.empty()) anchors.push_back(a);
    }
    reply["anchors"] = anchors;
    return reply.dump();
}

std::string mock_ground(const std::string &prompt) {
    const auto target = tokens(line_value(prompt, "TARGET: "));
    const auto anchor_words = tokens(line_value(prompt, "ANCHORS: "));
    std::vector<InstanceId> candidates;
    for (const auto &t : tokens(line_value(prompt, "CANDIDATES: "))) candidates.push_back(static_cast<InstanceId>(std::stoul(t)));
    const auto pos = prompt.find("SCENE GRAPH:\n");
    if (pos == std::string::npos) return "none";
    json graph;
    try {
        graph = json::parse(prompt.substr(pos + 13));
    } catch (const json::exception &) {
        return "none";
    }
    std::map<InstanceId, json> nodes;
    for (const auto &n : graph.at("nodes")) nodes[n.at("id").get<InstanceId>()] = n;
    const std::set<std::string> tset(target.begin(), target.end());
    const std::set<std::string> aset(anchor_words.begin(), anchor_words.end());

    auto node_words = [&](const json &n) {
        auto w = tokens(n.at("caption").get<std::string>());
        const auto c = tokens(n.at("category").get<std::string>());
        w.insert(w.end(), c.begin(), c.end());
        return std::set<std::string>(w.begin(), w.end());
    };
    long best_score = 0;
    InstanceId best = kNoInstance;
    for (InstanceId id : candidates) {
        auto it = nodes.find(id);
        if (it == nodes.end()) continue;
        const json &n = it->second;
        const auto cat = tokens(n.at("category").get<std::string>());
        const bool cat_match = !cat.empty() && std::all_of(cat.begin(), cat.end(), [&](const std::string &w) { return tset.count(w); });
        if (!cat_match) continue;
        long score = 100;
        const auto words = node_words(n);
        for (const auto &w : tset) score += 10 * static_cast<long>(words.count(w) && !stopwords().count(w));
        if (!aset.empty()) {
            std::vector<InstanceId> related;
            if (!n.at("parent").is_string()) related.push_back(n.at("parent").get<InstanceId>());
            for (const auto &e : graph.at("edges")) {
                if (e.at("child").get<InstanceId>() == id) related.push_back(e.at("parent").get<InstanceId>());
            }
            for (InstanceId r : related) {
                auto rn = nodes.find(r);
                if (rn == nodes.end()) continue;
                for (const auto &w : node_words(rn->second)) {
                    if (aset.count(w)) {
                        score += 1;
                        break;
                    }
                }
            }
        }
        if (score > best_score || (score == best_score && id < best)) {
            best_score = score;
            best = id;
        }
    }
    return best == kNoInstance ? std::string("none") : std::to_string(best);
}

} // namespace

std::vector<float> CategoryTextEmbedder::embed(const std::string &text) const {
    std::vector<float> v(dim_, 0.0f);
    const auto words = tokens(text);
    std::size_t best = categories_.size();
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < categories_.size() && i < dim_; ++i) {
        const auto cat = tokens(categories_[i]);
        if (cat.empty()) continue;
        for (std::size_t p = 0; p + cat.size() <= words.size(); ++p) {
            if (std::equal(cat.begin(), cat.end(), words.begin() + p) && categories_[i].size() > best_len) {
                best = i;
                best_len = categories_[i].size();
            }
        }
    }
    if (best < categories_.size()) v[best] = 1.0f;
    return v;
}

std::string MockVlm::complete(const std::string &prompt, const std::vector<ColorImage> &) {
    const std::string task = line_value(prompt, "TASK: ");
    if (task == "parse") return mock_parse(prompt);
    if (task == "ground") return mock_ground(prompt);
    return "unsupported task";
}

std::string parse_prompt(const std::string &query, const std::string &graph_json) {
    return "TASK: parse\n"
           "QUERY: " + query + "\n"
           "Identify the target object of the query and any anchor objects it is described relative to. "
           "Reply with JSON only: {\"target\": \"<description>\", \"anchors\": [\"<description>\", ...]}.\n"
           "SCENE GRAPH:\n" + graph_json;
}

std::string grounding_prompt(const ParsedQuery &q, const std::vector<InstanceId> &candidates,
                             const std::string &graph_json) {
    std::string ids, anchors;
    for (std::size_t i = 0; i < candidates.size(); ++i) ids += (i ? ", " : "") + std::to_string(candidates[i]);
    for (std::size_t i = 0; i < q.anchors.size(); ++i) anchors += (i ? "; " : "") + q.anchors[i];
    std::string image_lines;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        image_lines += "Image " + std::to_string(i + 1) + " is centred on candidate " + std::to_string(candidates[i]) +
                       "; boxes are labelled with instance ids.\n";
    }
    return "TASK: ground\n"
           "QUERY: " + q.raw + "\n"
           "TARGET: " + q.target + "\n"
           "ANCHORS: " + anchors + "\n"
           "CANDIDATES: " + ids + "\n" + image_lines +
           "Answer with exactly one candidate id as a number.\n"
           "SCENE GRAPH:\n" + graph_json;
}

ParsedQuery parse_query(const std::string &text, const std::string &graph_json, VlmClient &client,
                        const MindConfig &cfg) {
    if (tokens(text).empty()) fail(Errc::InvalidArgument, "empty query");
    const std::string prompt = parse_prompt(text, graph_json);
    std::string last;
    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        try {
            last = client.complete(prompt, {});
            const json j = json::parse(last);
            ParsedQuery q;
            q.raw = text;
            q.target = j.at("target").get<std::string>();
            if (j.contains("anchors") && !j["anchors"].is_null()) {
                q.anchors = j["anchors"].get<std::vector<std::string>>();
            }
            std::erase_if(q.anchors, [](const std::string &a) { return tokens(a).empty(); });
            if (!tokens(q.target).empty()) return q;
        } catch (const json::exception &) {
        } catch (const Error &e) {
            last = e.what();
        }
        spdlog::debug("query parse attempt {} rejected: {}", attempt + 1, last);
    }
    fail(Errc::ParseFailure, "could not parse query reply: " + last);
}

std::vector<InstanceId> retrieve(const std::string &description, const SceneGraph &graph, const GaussianMap &map,
                                 const TextEmbedder &embedder, int k) {
    if (graph.nodes.empty()) fail(Errc::EmptyScene, "scene graph has no nodes");
    const std::vector<float> e = embedder.embed(description);
    const bool zero = std::all_of(e.begin(), e.end(), [](float v) { return v == 0.0f; });
    std::vector<std::pair<double, InstanceId>> scored;
    for (const auto &[id, node] : graph.nodes) {
        double s = 0.0;
        if (!zero && map.has_instance(id)) {
            const auto &F = map.instance(id).feature;
            try {
                s = sem_similarity(e, F);
            } catch (const Error &) {
                s = 0.0;
            }
        }
        scored.emplace_back(s, id);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto &a, const auto &b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<InstanceId> out;
    for (std::size_t i = 0; i < scored.size() && static_cast<int>(i) < std::max(k, 0); ++i) out.push_back(scored[i].second);
    return out;
}

std::array<Vec3, 8> box_corners(const Aabb &b) {
    std::array<Vec3, 8> c;
    for (int i = 0; i < 8; ++i) {
        c[i] = Vec3(i & 1 ? b.max.x() : b.min.x(), i & 2 ? b.max.y() : b.min.y(), i & 4 ? b.max.z() : b.min.z());
    }
    return c;
}

namespace {

BoxProjection project_box(InstanceId id, const Aabb &b, const Pose &pose, const Intrinsics &K) {
    BoxProjection p;
    p.id = id;
    const auto corners = box_corners(b);
    Vec2 sum = Vec2::Zero();
    int n_vis = 0;
    Vec2 sum_front = Vec2::Zero();
    int n_front = 0;
    for (int i = 0; i < 8; ++i) {
        const Vec3 pc = world_to_camera(pose, corners[i]);
        if (!(pc.z() > kNearPlane)) continue;
        p.in_front[i] = true;
        p.corners[i] = {K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy};
        sum_front += p.corners[i];
        ++n_front;
        const Vec2 &q = p.corners[i];
        if (q.x() >= -0.5 && q.x() < K.width - 0.5 && q.y() >= -0.5 && q.y() < K.height - 0.5) {
            sum += q;
            ++n_vis;
            p.in_frame = true;
        }
    }
    if (n_vis > 0) {
        p.label_position = sum / n_vis;
    } else if (n_front > 0) {
        p.label_position = sum_front / n_front;
    }
    return p;
}

void put_pixel(ColorImage &img, int x, int y, const Vec3 &c) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
    for (int k = 0; k < 3; ++k) img(x, y, k) = c[k];
}

void draw_line(ColorImage &img, Vec2 a, Vec2 b, const Vec3 &c) {
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 1.5)));
    if (steps > 100000) return;
    for (int i = 0; i <= steps; ++i) {
        const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
        put_pixel(img, static_cast<int>(std::lround(p.x())), static_cast<int>(std::lround(p.y())), c);
    }
}

// 3x5 digit glyphs, one row per 3-bit group from the top.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{{7, 5, 5, 5, 7},
                                                               {2, 6, 2, 2, 7},
                                                               {7, 1, 7, 4, 7},
                                                               {7, 1, 7, 1, 7},
                                                               {5, 5, 7, 1, 1},
                                                               {7, 4, 7, 1, 7},
                                                               {7, 4, 7, 5, 7},
                                                               {7, 1, 1, 1, 1},
                                                               {7, 5, 7, 5, 7},
                                                               {7, 5, 7, 1, 7}}};

void draw_label(ColorImage &img, const Vec2 &center, InstanceId id, int scale) {
    const std::string text = std::to_string(id);
    const int w = static_cast<int>(text.size()) * 4 * scale + scale;
    const int h = 7 * scale;
    const int x0 = static_cast<int>(std::lround(center.x())) - w / 2;
    const int y0 = static_cast<int>(std::lround(center.y())) - h / 2;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) put_pixel(img, x0 + x, y0 + y, Vec3::Ones());
    }
    for (std::size_t d = 0; d < text.size(); ++d) {
        const auto &glyph = kDigits[text[d] - '0'];
        for (int row = 0; row < 5; ++row) {
            for (int col = 0; col < 3; ++col) {
                if (!(glyph[row] >> (2 - col) & 1)) continue;
                for (int sy = 0; sy < scale; ++sy) {
                    for (int sx = 0; sx < scale; ++sx) {
                        put_pixel(img, x0 + scale + static_cast<int>(d) * 4 * scale + col * scale + sx,
                                  y0 + scale + row * scale + sy, Vec3::Zero());
                    }
                }
            }
        }
    }
}

constexpr int kEdges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                               {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

const Vec3 kPalette[] = {{1.0, 0.1, 0.1}, {0.1, 0.4, 1.0}, {0.1, 0.8, 0.2}, {1.0, 0.6, 0.0}, {0.8, 0.2, 0.9}};

} // namespace

RoiView roi_render(const GaussianMap &map, const SceneGraph &graph, InstanceId target,
                   const std::vector<InstanceId> &anchors, const MindConfig &cfg) {
    auto it = graph.nodes.find(target);
    if (it == graph.nodes.end()) fail(Errc::UnknownInstance, "target not in graph");
    const SceneNode &t = it->second;
    if (!t.best_view) fail(Errc::RoiUnrenderable, "target has no best view");
    std::vector<const SceneNode *> anchor_nodes;
    for (InstanceId a : anchors) {
        auto ai = graph.nodes.find(a);
        if (ai != graph.nodes.end() && a != target) anchor_nodes.push_back(&ai->second);
    }
    Vec3 aim = t.center;
    if (!anchor_nodes.empty()) aim = 0.5 * (t.center + anchor_nodes.front()->center);
    const Pose &bv = t.best_view->pose;
    Pose pose;
    try {
        pose = look_at(bv.translation, aim, -bv.rotation.col(1));
    } catch (const Error &) {
        fail(Errc::RoiUnrenderable, "cannot aim the camera at the target");
    }
    const int s = std::max(1, cfg.roi_scale);
    Intrinsics base = map.intrinsics;
    base.width *= s;
    base.height *= s;
    base.fx *= s;
    base.fy *= s;
    base.cx = (base.cx + 0.5) * s - 0.5;
    base.cy = (base.cy + 0.5) * s - 0.5;

    std::optional<double> chosen, fallback;
    const int steps = static_cast<int>(std::floor((cfg.fov_widen_max - cfg.fov_widen) / cfg.fov_step + 1e-9));
    for (int i = 0; i <= steps; ++i) {
        const double f = cfg.fov_widen + i * cfg.fov_step;
        const Intrinsics K = base.widened(f);
        if (!project_box(target, t.bbox, pose, K).in_frame) continue;
        fallback = f;
        bool all = true;
        for (const SceneNode *a : anchor_nodes) all = all && project_box(a->id, a->bbox, pose, K).in_frame;
        if (all) {
            chosen = f;
            break;
        }
    }
    if (!chosen) chosen = fallback;
    if (!chosen) fail(Errc::RoiUnrenderable, "target " + std::to_string(target) + " not visible from its best view");

    RoiView view;
    view.pose = pose;
    view.fov_factor = *chosen;
    view.intrinsics = base.widened(*chosen);
    view.image = render_frame(map.gaussians, pose, view.intrinsics).color;
    for (auto &v : view.image.data()) v = std::clamp(v, 0.0, 1.0);
    view.boxes.push_back(project_box(target, t.bbox, pose, view.intrinsics));
    for (const SceneNode *a : anchor_nodes) view.boxes.push_back(project_box(a->id, a->bbox, pose, view.intrinsics));
    for (std::size_t b = 0; b < view.boxes.size(); ++b) {
        const auto &box = view.boxes[b];
        const Vec3 &color = kPalette[b % std::size(kPalette)];
        for (const auto &e : kEdges) {
            if (box.in_front[e[0]] && box.in_front[e[1]]) draw_line(view.image, box.corners[e[0]], box.corners[e[1]], color);
        }
    }
    for (const auto &box : view.boxes) draw_label(view.image, box.label_position, box.id, std::max(1, s / 2));
    return view;
}

GroundingResult ground(const std::string &query, const GaussianMap &map, const SceneGraph &graph, VlmClient &client,
                       const TextEmbedder &embedder, const MindConfig &cfg) {
    if (graph.nodes.empty()) fail(Errc::EmptyScene, "scene graph has no nodes");
    const std::string graph_json = to_json(graph);
    GroundingResult result;
    result.query = parse_query(query, graph_json, client, cfg);
    const auto targets = retrieve(result.query.target, graph, map, embedder, cfg.top_k);
    std::vector<InstanceId> anchors;
    for (const auto &a : result.query.anchors) {
        const auto top = retrieve(a, graph, map, embedder, 1);
        if (!top.empty()) anchors.push_back(top.front());
    }
    std::vector<ColorImage> images;
    for (InstanceId c : targets) {
        try {
            RoiView v = roi_render(map, graph, c, anchors, cfg);
            images.push_back(v.image);
            result.views.push_back(std::move(v));
            result.candidates.push_back(c);
        } catch (const Error &e) {
            if (e.code() != Errc::RoiUnrenderable) throw;
            spdlog::debug("candidate {} skipped: {}", c, e.what());
        }
    }
    if (result.candidates.empty()) fail(Errc::GroundingFailure, "no candidate could be rendered");
    const std::string prompt = grounding_prompt(result.query, result.candidates, graph_json);
    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        try {
            result.reply = client.complete(prompt, images);
        } catch (const Error &e) {
            result.reply = e.what();
            continue;
        }
        const auto id = first_integer(result.reply);
        if (id && std::find(result.candidates.begin(), result.candidates.end(), static_cast<InstanceId>(*id)) !=
                      result.candidates.end()) {
            result.id = static_cast<InstanceId>(*id);
            result.bbox = graph.nodes.at(result.id).bbox;
            return result;
        }
        spdlog::debug("grounding attempt {} rejected: {}", attempt + 1, result.reply);
    }
    fail(Errc::GroundingFailure, "reply did not name a candidate: " + result.reply);
}

std::string grounding_to_json(const GroundingResult &r) {
    auto v3 = [](const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); };
    json views = json::array();
    for (const auto &v : r.views) {
        json boxes = json::array();
        for (const auto &b : v.boxes) {
            json corners = json::array();
            for (int i = 0; i < 8; ++i) {
                corners.push_back(b.in_front[i] ? json::array({b.corners[i].x(), b.corners[i].y()}) : json(nullptr));
            }
            boxes.push_back({{"id", b.id}, {"corners", corners}, {"in_frame", b.in_frame}});
        }
        views.push_back({{"target", v.boxes.front().id}, {"fov_factor", v.fov_factor}, {"boxes", boxes}});
    }
    json j = {{"id", r.id},
              {"bbox", {{"min", v3(r.bbox.min)}, {"max", v3(r.bbox.max)}}},
              {"candidates", r.candidates},
              {"reply", r.reply},
              {"query", {{"raw", r.query.raw}, {"target", r.query.target}, {"anchors", r.query.anchors}}},
              {"views", views}};
    return j.dump(2) + "\n";
}

} // namespace gsmind
