// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "gsmind/errors.hpp"
#include "gsmind/scene_graph.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace gsmind;
using gsmind::testing::square_intrinsics;

namespace {

SceneNode box_node(InstanceId id, Role role, const Vec3 &mn, const Vec3 &mx) {
    SceneNode n;
    n.id = id;
    n.role = role;
    n.bbox = {mn, mx};
    n.center = 0.5 * (mn + mx);
    n.category = "thing" + std::to_string(id);
    return n;
}

std::map<InstanceId, SceneNode> as_map(std::vector<SceneNode> v) {
    std::map<InstanceId, SceneNode> m;
    for (auto &n : v) m.emplace(n.id, n);
    return m;
}

class ScriptedAnnotator : public AnnotatorClient {
public:
    explicit ScriptedAnnotator(Annotation a, bool fail = false) : a_(std::move(a)), fail_(fail) {}
    Annotation describe(const ColorImage &crop, const Mask &mask, const std::string &prompt) override {
        last_crop = crop;
        last_mask = mask;
        last_prompt = prompt;
        if (fail_) fail(Errc::ClientError, "timed out");
        return a_;
    }
    ColorImage last_crop;
    Mask last_mask;
    std::string last_prompt;

private:
    Annotation a_;
    bool fail_;
};

// Instance 0: a red blob of opaque Gaussians at the origin seen from views on a circle.
GaussianMap blob_map() {
    GaussianMap m;
    m.intrinsics = square_intrinsics(24, 24.0);
    for (int i = 0; i < 9; ++i) {
        GaussianSplat g;
        g.center = Eigen::Vector3f(0.03f * (i % 3 - 1), 0.03f * (i / 3 - 1), 0.0f);
        g.log_scale = Eigen::Vector3f::Constant(std::log(0.03f));
        g.opacity_logit = 6.0f;
        g.color = Eigen::Vector3f(0.9f, 0.1f, 0.1f);
        g.instance_id = 0;
        m.gaussians.push_back(g);
    }
    InstanceRecord r;
    r.id = 0;
    r.feature = {1.0f};
    r.weight = 1.0;
    for (std::uint32_t v = 0; v < 4; ++v) {
        const double a = v * M_PI / 2;
        r.views.push_back({v, look_at(Vec3(std::cos(a), std::sin(a), 0.8), Vec3::Zero(), Vec3(0, 0, 1)),
                           40 + 10 * v});
    }
    m.instances[0] = r;
    m.next_instance_id = 1;
    m.feature_dim = 1;
    return m;
}

std::filesystem::path data_dir() { return GSMIND_TEST_DATA_DIR; }

SceneGraph fixture_graph() {
    auto nodes = as_map({box_node(1, Role::Asset, Vec3(-0.5, -0.3, 0.0), Vec3(0.5, 0.3, 0.4)),
                         box_node(2, Role::Ordinary, Vec3(-0.1, -0.1, 0.42), Vec3(0.1, 0.1, 0.5)),
                         box_node(3, Role::Standalone, Vec3(1.0, 1.0, 0.0), Vec3(1.2, 1.2, 0.3))});
    nodes[2].caption = "a small mug";
    nodes[1].best_view = BestView{7, look_at(Vec3(1, 0, 1), Vec3::Zero(), Vec3(0, 0, 1)), 0.25};
    return build_hierarchy(nodes, infer_edges(nodes));
}

} // namespace

TEST(RoleRelation, ParseAndPrint) {
    for (Role r : {Role::Asset, Role::Ordinary, Role::Standalone}) EXPECT_EQ(parse_role(to_string(r)), r);
    for (Relation r : {Relation::Supports, Relation::Contains, Relation::RootLink})
        EXPECT_EQ(parse_relation(to_string(r)), r);
    EXPECT_FALSE(parse_role("Furniture!"));
    EXPECT_FALSE(parse_relation("under"));
}

TEST(ViewQuality, Arithmetic) {
    EXPECT_DOUBLE_EQ(view_quality(100, 100, 7, 7), 1.0);
    EXPECT_DOUBLE_EQ(view_quality(10, 100, 5, 10), 0.05);
    EXPECT_EQ(view_quality(10, 100, 0, 10), 0.0);
    EXPECT_THROW(view_quality(10, 100, 0, 0), Error);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const std::size_t total = 1 + rng() % 50, pixels = 1 + rng() % 500;
        const double q = view_quality(rng() % (pixels + 1), pixels, rng() % (total + 1), total);
        EXPECT_GE(q, 0.0);
        EXPECT_LE(q, 1.0);
    }
}

TEST(BestView, SingleViewAndErrors) {
    GaussianMap m = blob_map();
    m.instances[0].views.resize(1);
    const BestView b = best_view(m, 0);
    EXPECT_EQ(b.frame_id, 0u);
    EXPECT_NEAR(b.quality, 40.0 / (24 * 24), 1e-12);
    m.instances[0].views.clear();
    EXPECT_THROW(best_view(m, 0), Error);
    EXPECT_THROW(best_view(m, 5), Error);
    EXPECT_THROW(view_quality(m, 5, ObservingView{}), Error);
}

TEST(BestView, MatchesBruteForceOverViews) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        GaussianMap m = blob_map();
        auto &views = m.instances[0].views;
        views.clear();
        for (std::uint32_t v = 0; v < 6; ++v) {
            const double a = std::uniform_real_distribution<double>(0, 2 * M_PI)(rng);
            const double r = std::uniform_real_distribution<double>(0.6, 2.0)(rng);
            views.push_back({v, look_at(Vec3(r * std::cos(a), r * std::sin(a), 0.8), Vec3::Zero(), Vec3(0, 0, 1)),
                             static_cast<std::uint32_t>(20 + rng() % 120)});
        }
        Vec3 centroid = Vec3::Zero();
        for (const auto &v : views) centroid += v.pose.translation;
        centroid /= 6.0;
        std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return (views[a].pose.translation - centroid).norm() < (views[b].pose.translation - centroid).norm();
        });
        std::uint32_t expect = 0;
        double best = -1.0;
        for (int i = 0; i < 5; ++i) {
            const double q = view_quality(m, 0, views[idx[i]]);
            if (q > best || (q == best && views[idx[i]].frame_id < expect)) {
                best = q;
                expect = views[idx[i]].frame_id;
            }
        }
        const BestView b = best_view(m, 0);
        EXPECT_EQ(b.frame_id, expect);
        EXPECT_DOUBLE_EQ(b.quality, best);

        for (auto &v : views) v.mask_pixels *= 4; // positive rescaling of every q
        EXPECT_EQ(best_view(m, 0).frame_id, expect);
    }
}

TEST(BestView, FarLowQualityViewIgnored) {
    GaussianMap m = blob_map();
    for (std::uint32_t v = 4; v < 6; ++v) m.instances[0].views.push_back(m.instances[0].views[v - 4]);
    GraphConfig cfg;
    cfg.top_k_views = 6;
    const BestView before = best_view(m, 0, cfg);
    m.instances[0].views.push_back({99, look_at(Vec3(30, 0, 5), Vec3::Zero(), Vec3(0, 0, 1)), 24 * 24});
    EXPECT_EQ(best_view(m, 0, cfg).frame_id, before.frame_id);
}

TEST(Annotate, ColorKeyAndValidation) {
    const GaussianMap m = blob_map();
    const BestView v = best_view(m, 0);
    ColorKeyAnnotator keyed({{Vec3(0.1, 0.1, 0.9), {"mug", "a blue mug", "Ordinary"}},
                             {Vec3(0.9, 0.1, 0.1), {"table", "a red table", "Asset"}}});
    const Annotation a = annotate(m, 0, v, keyed);
    EXPECT_EQ(a.category, "table");
    EXPECT_EQ(a.caption, "a red table");
    EXPECT_EQ(a.role, "Asset");

    ScriptedAnnotator bad({"table", "x", "Furniture!"});
    try {
        annotate(m, 0, v, bad);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), Errc::AnnotationInvalid);
    }
    EXPECT_EQ(bad.last_prompt, kAnnotationPrompt);
    EXPECT_EQ(bad.last_crop.width(), bad.last_mask.width());
    EXPECT_LT(bad.last_crop.width(), m.intrinsics.width);

    ScriptedAnnotator down({}, true);
    try {
        annotate(m, 0, v, down);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), Errc::AnnotationUnavailable);
    }
}

TEST(MakeNode, GeometryAndFallback) {
    const GaussianMap m = blob_map();
    ScriptedAnnotator ok({"table", "a red table", "Asset"});
    const SceneNode n = make_node(m, 0, ok);
    EXPECT_EQ(n.role, Role::Asset);
    EXPECT_NEAR(n.center.norm(), 0.0, 1e-7);
    EXPECT_NEAR(n.bbox.max.x(), 0.03, 1e-7);
    EXPECT_NEAR(n.bbox.min.y(), -0.03, 1e-7);
    ASSERT_TRUE(n.best_view);

    ScriptedAnnotator down({}, true);
    const SceneNode f = make_node(m, 0, down);
    EXPECT_EQ(f.category, "unknown");
    EXPECT_EQ(f.role, Role::Standalone);
    EXPECT_TRUE(f.caption.empty());

    GaussianMap empty = blob_map();
    empty.gaussians.clear();
    EXPECT_THROW(make_node(empty, 0, ok), Error);
}

TEST(InferEdges, SupportContainmentAndNone) {
    const auto resting = as_map({box_node(1, Role::Asset, Vec3(-0.5, -0.5, 0), Vec3(0.5, 0.5, 0.7)),
                                 box_node(2, Role::Ordinary, Vec3(-0.05, -0.05, 0.7), Vec3(0.05, 0.05, 0.8))});
    const auto e = infer_edges(resting);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].parent, 1u);
    EXPECT_EQ(e[0].child, 2u);
    EXPECT_EQ(e[0].relation, Relation::Supports);
    EXPECT_DOUBLE_EQ(e[0].score, 1.0);

    const auto far = as_map({box_node(1, Role::Asset, Vec3(0, 0, 0), Vec3(1, 1, 1)),
                             box_node(2, Role::Ordinary, Vec3(5, 5, 0), Vec3(6, 6, 1))});
    EXPECT_TRUE(infer_edges(far).empty());

    const auto nested = as_map({box_node(1, Role::Asset, Vec3(0, 0, 0), Vec3(1, 1, 1)),
                                box_node(2, Role::Ordinary, Vec3(0.2, 0.2, 0.2), Vec3(0.4, 0.4, 0.4))});
    const auto c = infer_edges(nested);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].relation, Relation::Contains);

    const auto floating = as_map({box_node(1, Role::Asset, Vec3(-0.5, -0.5, 0), Vec3(0.5, 0.5, 0.7)),
                                  box_node(2, Role::Ordinary, Vec3(-0.05, -0.05, 0.85), Vec3(0.05, 0.05, 0.9))});
    EXPECT_TRUE(infer_edges(floating).empty());
}

TEST(BuildHierarchy, ChainsAndFallback) {
    auto nodes = as_map({box_node(1, Role::Asset, Vec3(-0.5, -0.5, 0), Vec3(0.5, 0.5, 0.7)),
                         box_node(2, Role::Ordinary, Vec3(-0.05, -0.05, 0.7), Vec3(0.05, 0.05, 0.8)),
                         box_node(3, Role::Ordinary, Vec3(3, 3, 0), Vec3(3.1, 3.1, 0.1))});
    const SceneGraph g = build_hierarchy(nodes, infer_edges(nodes));
    EXPECT_EQ(g.nodes.at(1).parent, kRootId);
    EXPECT_EQ(g.nodes.at(2).parent, 1u);
    EXPECT_EQ(g.nodes.at(2).relation, Relation::Supports);
    EXPECT_EQ(g.nodes.at(3).parent, kRootId);
    EXPECT_EQ(g.nodes.at(3).relation, Relation::RootLink);
    EXPECT_TRUE(graph_is_consistent(g));

    nodes[1].role = Role::Standalone; // only Assets adopt
    EXPECT_EQ(build_hierarchy(nodes, infer_edges(nodes)).nodes.at(2).parent, kRootId);
}

TEST(BuildHierarchy, RandomScenesReachRoot) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const SceneGraph g = gsmind::testing::random_graph(seed);
        EXPECT_TRUE(gsmind::testing::reaches_root_acyclic(g));
        EXPECT_TRUE(graph_is_consistent(g));
    }
}

TEST(Sync, RemovalsAndAdditions) {
    auto nodes = as_map({box_node(1, Role::Asset, Vec3(-0.5, -0.5, 0), Vec3(0.5, 0.5, 0.7)),
                         box_node(2, Role::Ordinary, Vec3(-0.3, -0.3, 0.7), Vec3(-0.2, -0.2, 0.8)),
                         box_node(3, Role::Ordinary, Vec3(0.2, 0.2, 0.7), Vec3(0.3, 0.3, 0.8)),
                         box_node(4, Role::Standalone, Vec3(2, 2, 0), Vec3(2.2, 2.2, 0.3))});
    const SceneGraph g = build_hierarchy(nodes, infer_edges(nodes));
    ASSERT_EQ(g.nodes.at(3).parent, 1u);

    const std::vector<InstanceId> leaf{2};
    const SceneGraph a = sync(g, leaf, std::vector<SceneNode>{});
    EXPECT_EQ(a.nodes.size(), 3u);
    EXPECT_FALSE(a.nodes.count(2));

    const std::vector<InstanceId> asset{1};
    const SceneGraph b = sync(g, asset, std::vector<SceneNode>{});
    EXPECT_EQ(b.nodes.size(), 1u);
    for (const auto &e : b.edges) {
        EXPECT_NE(e.parent, 1u);
        EXPECT_NE(e.child, 1u);
    }

    const SceneGraph c = sync(g, {}, std::vector<SceneNode>{box_node(9, Role::Ordinary, Vec3(0, 0, 0.7),
                                                                      Vec3(0.1, 0.1, 0.75))});
    EXPECT_EQ(c.nodes.size(), 5u);
    EXPECT_EQ(c.nodes.at(9).parent, 1u);
    EXPECT_TRUE(graph_is_consistent(c));

    const std::vector<InstanceId> absent{77};
    EXPECT_EQ(sync(g, absent, std::vector<SceneNode>{}), g);
}

TEST(Sync, FromMapBuildsNodes) {
    const GaussianMap m = blob_map();
    ScriptedAnnotator ok({"table", "a red table", "Asset"});
    const std::vector<InstanceId> added{0, 5};
    const SceneGraph g = sync(SceneGraph{}, {}, added, m, ok);
    ASSERT_EQ(g.nodes.size(), 1u);
    EXPECT_EQ(g.nodes.at(0).category, "table");
}

TEST(GraphJson, EmptyAndRoundTrip) {
    const std::string empty = to_json(SceneGraph{});
    const auto j = nlohmann::json::parse(empty);
    EXPECT_EQ(j.at("root"), "root");
    EXPECT_TRUE(j.at("nodes").empty());
    EXPECT_TRUE(j.at("edges").empty());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SceneGraph g = gsmind::testing::random_graph(seed);
        const std::string text = to_json(g);
        const SceneGraph back = graph_from_json(text);
        EXPECT_EQ(back, g);
        EXPECT_EQ(to_json(back), text);
    }
    EXPECT_THROW(graph_from_json("{\"nodes\": 3}"), Error);
    EXPECT_THROW(graph_from_json("not json"), Error);
}

TEST(GraphJson, MatchesGoldenFile) {
    std::ifstream in(data_dir() / "golden_graph.json");
    ASSERT_TRUE(in) << "missing golden file";
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(to_json(fixture_graph()), ss.str());
    EXPECT_EQ(graph_from_json(ss.str()), fixture_graph());
}
