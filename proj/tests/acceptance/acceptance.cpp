// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments select criteria by name.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "gsmind/evaluation.hpp"
#include "gsmind/instance_engine.hpp"
#include "gsmind/losses.hpp"
#include "gsmind/map_file.hpp"
#include "gsmind/mind.hpp"
#include "gsmind/pipeline.hpp"
#include "gsmind/protocol.hpp"
#include "gsmind/render.hpp"
#include "gsmind/report.hpp"
#include "gsmind/scene_graph.hpp"
#include "gsmind/synth.hpp"
#include "gsmind/updater.hpp"
#include "test_support.hpp"

using namespace gsmind;
namespace gt = gsmind::testing;

namespace {

// Tolerances and budgets.
constexpr double kRenderTol = 1e-5;
constexpr double kRenderBudgetS = 60.0;
constexpr double kGradTol = 1e-3;
constexpr double kGradBudgetS = 300.0;
constexpr double kArithTol = 1e-9;
constexpr int kMappingSeeds = 10;
constexpr int kMappingExactMin = 9;
constexpr double kMinMiou = 0.9;
constexpr double kMinPsnr = 30.0;
constexpr double kMappingBudgetS = 600.0;
constexpr double kRelocTrans = 0.05;
constexpr double kRelocRotDeg = 5.0;
constexpr double kRelocTransTol = 0.01;
constexpr double kRelocRotTolDeg = 1.0;
constexpr int kRelocTrials = 20;
constexpr int kRelocMin = 18;
constexpr int kRemovals = 20, kRemovalsMin = 18;
constexpr int kAdditions = 20, kAdditionsMin = 17;
constexpr int kMovements = 10;
constexpr double kUpdateOverallMin = 0.85;
constexpr int kLocalityTrials = 20;
constexpr int kGraphOps = 1000;
constexpr double kCornerTolPx = 1.0;
constexpr int kFuzzCases = 100;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct SeedMap {
    SceneSpec spec;
    GaussianMap map;
};

// Mapping results shared by the later criteria.
std::map<int, SeedMap> &seed_maps() {
    static std::map<int, SeedMap> maps;
    return maps;
}

const SeedMap &seed_map(int seed) {
    auto &maps = seed_maps();
    auto it = maps.find(seed);
    if (it != maps.end()) return it->second;
    SeedMap sm;
    sm.spec = default_scene(static_cast<std::uint64_t>(seed));
    sm.map = build_map(gen_scene(sm.spec).bundle);
    return maps.emplace(seed, std::move(sm)).first->second;
}

Outcome renderer_oracle() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    int bad = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const int count = 1 + static_cast<int>(seed % 50);
        const int w = 4 + static_cast<int>((seed * 7) % 29);
        const int h = 4 + static_cast<int>((seed * 13) % 29);
        const auto s = gt::random_scene(seed, count, w, h);
        const RenderOutput a = render_frame(s.gaussians, s.pose, s.K);
        const RenderOutput b = oracle_render(s.gaussians, s.pose, s.K);
        double d = 0.0;
        for (std::size_t i = 0; i < a.color.size(); ++i) d = std::max(d, std::abs(a.color.data()[i] - b.color.data()[i]));
        for (std::size_t i = 0; i < a.depth.size(); ++i) {
            d = std::max(d, std::abs(a.depth.data()[i] - b.depth.data()[i]));
            d = std::max(d, std::abs(a.alpha.data()[i] - b.alpha.data()[i]));
            if (a.instance_map.data()[i] != b.instance_map.data()[i]) d = std::max(d, 1.0);
        }
        worst = std::max(worst, d);
        bad += d > kRenderTol;
    }
    const double t = seconds_since(t0);
    return {bad == 0 && t < kRenderBudgetS, fmt("200 scenes, %d over tolerance, max diff %.2e, %.1fs", bad, worst, t)};
}

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    int checked = 0, failed = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = gt::random_scene(7000 + seed, 1 + static_cast<int>(seed % 10), 12, 12);
        const auto r = gt::check_render_gradients(s, seed, kGradTol, true);
        checked += r.checked;
        failed += r.failed;
        worst = std::max(worst, r.worst);
    }
    const double t = seconds_since(t0);
    return {failed == 0 && checked > 0 && t < kGradBudgetS,
            fmt("50 scenes, %d partials checked, %d failed, worst rel err %.2e, %.1fs", checked, failed, worst, t)};
}

Outcome association_oracle() {
    int frames = 0, agree = 0, decisions = 0, contested = 0;
    for (int seed = 0; seed < 10; ++seed) {
        SceneSpec spec = default_scene(static_cast<std::uint64_t>(100 + seed));
        spec.width = spec.height = 32;
        spec.focal = 32.0;
        spec.min_mask_pixels = 4;
        spec.trajectory.frames = 10;
        const Bundle bundle = gen_scene(spec).bundle;
        GaussianMap map;
        map.intrinsics = bundle.meta.intrinsics;
        map.feature_dim = bundle.meta.feature_dim;
        OptimizerConfig opt;
        opt.scene_extent = camera_extent(bundle.frames);
        for (const auto &frame : bundle.frames) {
            const auto hits = map.voxels.integrate_frame(frame.depth, frame.pose, map.intrinsics);
            bool ok = true;
            for (const auto &obs : frame.instances) {
                const auto oracle = gt::brute_force_associate(map, obs, frame.depth, frame.pose);
                std::optional<AssociationOutcome> got;
                try {
                    got = associate(map, obs, frame.depth, frame.pose);
                } catch (const Error &e) {
                    if (e.code() != Errc::EmptyObservation) throw;
                }
                if (!got) {
                    ok = ok && oracle.scores.empty() && !oracle.matched;
                    continue;
                }
                ++decisions;
                contested += oracle.scores.size() > 1;
                ok = ok && got->matched() == oracle.matched && got->candidates.size() == oracle.scores.size();
                if (!oracle.scores.empty()) ok = ok && got->best.id == oracle.best;
            }
            ++frames;
            agree += ok;
            std::unordered_map<std::uint32_t, InstanceId> label_to_instance;
            for (const auto &o : process_frame(map, frame)) {
                if (o.kind != AssociationOutcome::Kind::Failed) label_to_instance[o.label] = o.id;
            }
            densify(map, hits, frame, label_to_instance, opt);
        }
    }
    return {frames == 100 && agree == frames,
            fmt("%d/%d frames identical (%d observations, %d with several candidates)", agree, frames, decisions,
                contested)};
}

Outcome arithmetic() {
    const double js = joint_score(0.5, 0.5, 1.0);
    const double tl = total_loss(LossComponents{1.0, 1.0, 1.0, 1.0});
    const double ls = scale_excess(Vec3(std::log(100.0), 0.0, 0.0));
    GaussianSplat g;
    g.log_scale = Eigen::Vector3f(static_cast<float>(std::log(100.0)), 0.0f, 0.0f);
    const double ls_float = loss_scale(std::span(&g, 1));
    RenderOutput out;
    out.depth = DepthImage(2, 1, 1, 1.0);
    out.alpha = Image<double>(2, 1, 1, 0.98);
    out.alpha(1, 0) = std::nextafter(0.98, 1.0);
    out.color = ColorImage(2, 1, 3, 0.0);
    const Mask m = silhouette_mask(out, DepthImage(2, 1, 1, 1.0));
    const bool gate = m(0, 0) == 0 && m(1, 0) == 1;
    // the stored float log-scale carries about 1e-7 rounding
    const bool pass = std::abs(js - 0.6) < kArithTol && std::abs(tl - 2.2) < kArithTol &&
                      std::abs(ls - std::log(10.0)) < kArithTol && std::abs(ls_float - std::log(10.0)) < 1e-6 && gate;
    return {pass, fmt("joint %.12f, total %.12f, scale %.9f (ln10 %.9f), gate %s", js, tl, ls, std::log(10.0),
                      gate ? "flips at 0.98" : "wrong")};
}

Outcome mapping_quality() {
    int exact = 0;
    double min_miou = 1.0, min_psnr = 1e9, max_time = 0.0;
    std::string per_seed;
    for (int seed = 0; seed < kMappingSeeds; ++seed) {
        const auto t0 = Clock::now();
        seed_maps().erase(seed);
        const SeedMap &sm = seed_map(seed);
        const double t = seconds_since(t0);
        const RecoveryReport rec = instance_recovery(sm.map, sm.spec);
        const SegmentationMetrics seg = eval_segmentation(sm.map, sm.spec);
        const auto poses = held_out_poses(sm.spec, 6);
        std::vector<ColorImage> truth;
        for (const auto &p : poses) truth.push_back(render_truth(sm.spec, p).color);
        const PhotometricMetrics ph = eval_photometric(sm.map, poses, truth);
        exact += rec.exact;
        min_miou = std::min(min_miou, seg.miou);
        min_psnr = std::min(min_psnr, ph.psnr);
        max_time = std::max(max_time, t);
        std::printf("  mapping seed %d: %zu instances for %zu objects%s, mIoU %.3f, PSNR %.2f dB, %.0fs\n", seed,
                    rec.instances, rec.objects, rec.exact ? "" : " (inexact)", seg.miou, ph.psnr, t);
        std::fflush(stdout);
    }
    const bool pass = exact >= kMappingExactMin && min_miou >= kMinMiou && min_psnr >= kMinPsnr && max_time < kMappingBudgetS;
    return {pass, fmt("exact %d/%d, min mIoU %.3f, min PSNR %.2f dB, max %.0fs/seed", exact, kMappingSeeds, min_miou,
                      min_psnr, max_time)};
}

Outcome relocalization() {
    const SeedMap &sm = seed_map(0);
    const auto poses = held_out_poses(sm.spec, kRelocTrials);
    std::mt19937_64 rng(2024);
    int ok = 0;
    double worst_t = 0.0, worst_r = 0.0;
    for (int i = 0; i < kRelocTrials; ++i) {
        const FrameObservation f = synth_frame(sm.spec, poses[static_cast<std::size_t>(i)], 5000 + static_cast<std::uint32_t>(i));
        const Pose coarse = perturb_pose(f.pose, kRelocTrans, kRelocRotDeg * M_PI / 180.0, rng);
        const RefineResult r = refine_pose(sm.map, f, coarse);
        const double te = translation_error(r.pose, f.pose);
        const double re = rotation_error(r.pose, f.pose) * 180.0 / M_PI;
        worst_t = std::max(worst_t, te);
        worst_r = std::max(worst_r, re);
        ok += te < kRelocTransTol && re < kRelocRotTolDeg;
    }
    return {ok >= kRelocMin,
            fmt("%d/%d within 1 cm / 1 deg, worst %.4f m / %.3f deg", ok, kRelocTrials, worst_t, worst_r)};
}

Outcome update_protocol() {
    int rem = 0, add = 0, mov = 0;
    std::vector<UpdateTrial> trials;
    for (int seed = 0; seed < kMappingSeeds; ++seed) {
        const SeedMap &sm = seed_map(seed);
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919 + 3);
        std::vector<std::pair<Edit, std::string>> edits;
        for (int k = 0; k < kRemovals / kMappingSeeds; ++k) edits.emplace_back(make_removal(sm.spec, static_cast<std::size_t>(2 * seed + k)), "removal");
        for (int k = 0; k < kAdditions / kMappingSeeds; ++k) edits.emplace_back(make_addition(sm.spec, rng), "addition");
        for (int k = 0; k < kMovements / kMappingSeeds; ++k) edits.emplace_back(make_movement(sm.spec, static_cast<std::size_t>(seed + k), rng), "movement");
        for (std::size_t e = 0; e < edits.size(); ++e) {
            const TrialOutcome o = run_trial(sm.map, sm.spec, edits[e].first, static_cast<std::uint64_t>(seed * 100 + e));
            const bool s = trial_success(o.trial);
            trials.push_back(o.trial);
            if (o.trial.kind == UpdateTrial::Kind::Removal) rem += s;
            if (o.trial.kind == UpdateTrial::Kind::Addition) add += s;
            if (o.trial.kind == UpdateTrial::Kind::Movement) mov += s;
            std::printf("  update seed %d %s: %s\n", seed, edits[e].second.c_str(), s ? "success" : "failure");
            std::fflush(stdout);
        }
    }
    const double overall = eval_updates(trials);
    return {rem >= kRemovalsMin && add >= kAdditionsMin && overall >= kUpdateOverallMin,
            fmt("removals %d/%d, movements %d/%d, additions %d/%d, overall %.1f%%", rem, kRemovals, mov, kMovements, add,
                kAdditions, 100.0 * overall)};
}

// Field-wise so struct padding does not take part in the comparison.
bool same_bits(const GaussianSplat &a, const GaussianSplat &b) {
    return std::memcmp(a.center.data(), b.center.data(), sizeof(float) * 3) == 0 &&
           std::memcmp(a.color.data(), b.color.data(), sizeof(float) * 3) == 0 &&
           std::memcmp(a.log_scale.data(), b.log_scale.data(), sizeof(float) * 3) == 0 &&
           std::memcmp(a.rotation.data(), b.rotation.data(), sizeof(float) * 4) == 0 &&
           std::memcmp(&a.opacity_logit, &b.opacity_logit, sizeof(float)) == 0 && a.instance_id == b.instance_id;
}

Outcome locality() {
    const SeedMap &sm = seed_map(0);
    const auto poses = trajectory_poses(sm.spec);
    const Intrinsics &K = sm.map.intrinsics;
    std::mt19937_64 rng(77);
    int ok = 0, moved_inside = 0;
    for (int trial = 0; trial < kLocalityTrials; ++trial) {
        GaussianMap map = sm.map;
        const Pose pose = poses[rng() % poses.size()];
        const FrameObservation f = synth_frame(sm.spec, pose, 9000 + static_cast<std::uint32_t>(trial));
        Mask mask(K.width, K.height, 1, 0);
        auto it = map.instances.begin();
        std::advance(it, static_cast<long>(rng() % map.instances.size()));
        mask = render_instance_mask(map, it->first, pose, K);
        // a few fresh Gaussians, as a residual spawn would add
        const std::size_t first_new = map.gaussians.size();
        for (int k = 0; k < 5; ++k) {
            GaussianSplat g = map.gaussians[rng() % first_new];
            g.center += Eigen::Vector3f(0.01f, 0.0f, 0.0f);
            const VoxelKey key = map.voxels.key_of(g.center.cast<double>());
            map.voxels.mark_observed(key);
            map.add_gaussian(g, key);
        }
        const GaussianMap before = map;
        masked_refine(map, mask, Keyframe{f.frame_id, pose, f.color, f.depth}, 30, first_new);

        // independent region: square dilation by 5 px, projected centers rounded to the nearest pixel
        std::vector<std::uint8_t> region(static_cast<std::size_t>(K.width) * K.height, 0);
        for (int y = 0; y < K.height; ++y) {
            for (int x = 0; x < K.width; ++x) {
                if (!mask(x, y)) continue;
                for (int yy = std::max(0, y - 5); yy <= std::min(K.height - 1, y + 5); ++yy) {
                    for (int xx = std::max(0, x - 5); xx <= std::min(K.width - 1, x + 5); ++xx) {
                        region[static_cast<std::size_t>(yy) * K.width + xx] = 1;
                    }
                }
            }
        }
        bool local = map.gaussians.size() == before.gaussians.size();
        for (std::size_t i = 0; local && i < first_new; ++i) {
            const Vec3 p = pose.rotation.transpose() * (before.gaussians[i].center.cast<double>() - pose.translation);
            bool inside = false;
            if (p.z() > kNearPlane) {
                const long u = std::lround(K.fx * p.x() / p.z() + K.cx);
                const long v = std::lround(K.fy * p.y() / p.z() + K.cy);
                inside = u >= 0 && v >= 0 && u < K.width && v < K.height &&
                         region[static_cast<std::size_t>(v) * K.width + static_cast<std::size_t>(u)];
            }
            const auto &a = before.gaussians[i];
            const auto &b = map.gaussians[i];
            const bool same = same_bits(a, b);
            if (!inside && !same) local = false;
            if (inside && !same) ++moved_inside;
        }
        ok += local;
    }
    return {ok == kLocalityTrials && moved_inside > 0,
            fmt("%d/%d trials bitwise unchanged outside the dilated mask (%d Gaussians updated inside)", ok,
                kLocalityTrials, moved_inside)};
}

Outcome graph_invariants() {
    std::mt19937_64 rng(4242);
    SceneGraph graph;
    InstanceId next = 1;
    int violations = 0, subtree_checks = 0, subtree_bad = 0;
    for (int op = 0; op < kGraphOps; ++op) {
        const int kind = static_cast<int>(rng() % 4);
        std::vector<SceneNode> assets;
        for (const auto &[id, n] : graph.nodes) {
            if (n.role == Role::Asset) assets.push_back(n);
        }
        if (kind == 0 || graph.nodes.empty()) {
            std::vector<SceneNode> added;
            const int k = 1 + static_cast<int>(rng() % 3);
            for (int i = 0; i < k; ++i) added.push_back(gt::random_node(rng, next++, assets));
            graph = sync(graph, {}, added);
        } else if (kind == 1 && !assets.empty()) {
            const InstanceId a = assets[rng() % assets.size()].id;
            const auto sub = gt::subtree_of(graph, a);
            std::set<InstanceId> expect;
            for (const auto &[id, n] : graph.nodes) expect.insert(id);
            for (InstanceId id : sub) expect.erase(id);
            const std::vector<InstanceId> removed{a};
            graph = sync(graph, removed, {});
            std::set<InstanceId> got;
            for (const auto &[id, n] : graph.nodes) got.insert(id);
            ++subtree_checks;
            subtree_bad += got != expect;
        } else if (kind == 2) {
            auto it = graph.nodes.begin();
            std::advance(it, static_cast<long>(rng() % graph.nodes.size()));
            std::vector<InstanceId> removed{it->first};
            std::vector<SceneNode> added{gt::random_node(rng, next++, assets)};
            graph = sync(graph, removed, added);
        } else {
            auto nodes = graph.nodes;
            graph = build_hierarchy(nodes, infer_edges(nodes));
        }
        if (graph.nodes.size() > 40) {
            std::vector<InstanceId> removed;
            for (const auto &[id, n] : graph.nodes) {
                if (removed.size() < 10) removed.push_back(id);
            }
            graph = sync(graph, removed, {});
        }
        violations += !gt::reaches_root_acyclic(graph);
    }
    return {violations == 0 && subtree_bad == 0 && subtree_checks > 0,
            fmt("%d ops, %d invariant violations, %d/%d Asset removals deleted exactly the subtree", kGraphOps, violations,
                subtree_checks - subtree_bad, subtree_checks)};
}

Outcome grounding() {
    const SeedMap &sm = seed_map(0);
    ColorKeyAnnotator annotator(annotation_table(sm.spec));
    const SceneGraph graph = build_graph(sm.map, annotator);
    const auto truth = instance_truth_labels(sm.map, sm.spec);
    auto object_of = [&](const std::string &caption) {
        for (const auto &o : sm.spec.objects) {
            if (o.caption == caption) return o.id;
        }
        return 0u;
    };
    const std::vector<std::pair<std::string, std::string>> queries{
        {"the desk", "a low wooden desk"},
        {"the wooden desk", "a low wooden desk"},
        {"the low desk in the room", "a low wooden desk"},
        {"the blue cabinet", "a blue storage cabinet"},
        {"the storage cabinet next to the desk", "a blue storage cabinet"},
        {"the cabinet", "a blue storage cabinet"},
        {"the blue storage cabinet", "a blue storage cabinet"},
        {"the red book", "a red hardcover book"},
        {"the red book on the desk", "a red hardcover book"},
        {"the hardcover book", "a red hardcover book"},
        {"the book that is red", "a red hardcover book"},
        {"the green book", "a green paperback book"},
        {"the green book on the desk", "a green paperback book"},
        {"the paperback book", "a green paperback book"},
        {"find the green paperback book on the desk", "a green paperback book"},
        {"the yellow ball", "a yellow rubber ball"},
        {"the ball on the floor", "a yellow rubber ball"},
        {"the rubber ball near the desk", "a yellow rubber ball"},
        {"the ball", "a yellow rubber ball"},
        {"the yellow rubber ball", "a yellow rubber ball"}};
    MockVlm vlm;
    const CategoryTextEmbedder embedder(sm.spec.categories, sm.map.feature_dim);
    int correct = 0, corners = 0;
    double worst_px = 0.0;
    for (const auto &[q, caption] : queries) {
        try {
            const GroundingResult r = ground(q, sm.map, graph, vlm, embedder);
            auto t = truth.find(r.id);
            const bool hit = t != truth.end() && t->second == object_of(caption);
            correct += hit;
            if (!hit) std::printf("  grounding miss: \"%s\" -> %u\n", q.c_str(), r.id);
            for (const auto &view : r.views) {
                const Intrinsics &K = view.intrinsics;
                for (const auto &box : view.boxes) {
                    const Aabb &b = graph.nodes.at(box.id).bbox;
                    for (int c = 0; c < 8; ++c) {
                        const Vec3 w((c & 1) ? b.max.x() : b.min.x(), (c & 2) ? b.max.y() : b.min.y(),
                                     (c & 4) ? b.max.z() : b.min.z());
                        const Vec3 p = view.pose.rotation.transpose() * (w - view.pose.translation);
                        if (!(p.z() > 0.0) || !box.in_front[static_cast<std::size_t>(c)]) continue;
                        const Vec2 px(K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy);
                        worst_px = std::max(worst_px, (px - box.corners[static_cast<std::size_t>(c)]).norm());
                        ++corners;
                    }
                }
            }
        } catch (const Error &e) {
            std::printf("  grounding error: \"%s\": %s\n", q.c_str(), e.what());
        }
    }
    return {correct == 20 && corners > 0 && worst_px <= kCornerTolPx,
            fmt("%d/20 queries correct, %d corners checked, worst corner error %.2e px", correct, corners, worst_px)};
}

Outcome serialization() {
    int map_ok = 0, graph_ok = 0, report_ok = 0;
    for (int i = 0; i < kFuzzCases; ++i) {
        const GaussianMap m = gt::random_map(static_cast<std::uint64_t>(i));
        const std::string bytes = encode_map(m);
        const GaussianMap m2 = decode_map(bytes);
        map_ok += m2 == m && encode_map(m2) == bytes;

        const SceneGraph g = gt::random_graph(static_cast<std::uint64_t>(i));
        const std::string gj = to_json(g);
        const SceneGraph g2 = graph_from_json(gj);
        graph_ok += g2.nodes == g.nodes && g2.edges == g.edges && to_json(g2) == gj;

        const ChangeReport r = gt::random_report(static_cast<std::uint64_t>(i));
        const std::string rj = report_to_json(r);
        const ChangeReport r2 = report_from_json(rj);
        report_ok += r2 == r && report_to_json(r2) == rj;
    }
    return {map_ok == kFuzzCases && graph_ok == kFuzzCases && report_ok == kFuzzCases,
            fmt("map %d/%d, graph %d/%d, report %d/%d bitwise round-trips", map_ok, kFuzzCases, graph_ok, kFuzzCases,
                report_ok, kFuzzCases)};
}

} // namespace

int main(int argc, char **argv) {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"renderer_oracle_equivalence", renderer_oracle},
        {"gradient_correctness", gradient_correctness},
        {"association_oracle_equivalence", association_oracle},
        {"score_and_loss_arithmetic", arithmetic},
        {"synthetic_mapping_quality", mapping_quality},
        {"relocalization", relocalization},
        {"dynamic_update_protocol", update_protocol},
        {"masked_refine_locality", locality},
        {"graph_invariants", graph_invariants},
        {"grounding_mock_vlm", grounding},
        {"serialization_round_trip", serialization},
    };
    std::set<std::string> selected(argv + 1, argv + argc);
    int failed = 0;
    for (const auto &[name, run] : criteria) {
        if (!selected.empty() && !selected.count(name)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
