// SPDX-License-Identifier: Apache-2.0
#include "gsmind/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "gsmind/bundle.hpp"
#include "gsmind/clients.hpp"
#include "gsmind/config.hpp"
#include "gsmind/evaluation.hpp"
#include "gsmind/file_util.hpp"
#include "gsmind/image_io.hpp"
#include "gsmind/map_file.hpp"
#include "gsmind/mind.hpp"
#include "gsmind/pipeline.hpp"
#include "gsmind/report.hpp"
#include "gsmind/scene_graph.hpp"
#include "gsmind/synth.hpp"
#include "gsmind/updater.hpp"

namespace gsmind {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_data_error(Errc c) {
    switch (c) {
    case Errc::MissingFile:
    case Errc::BadShape:
    case Errc::NonUnitFeature:
    case Errc::BadDepthScale:
    case Errc::BadMagic:
    case Errc::TruncatedFile:
    case Errc::ShapeMismatch:
    case Errc::InvalidEdit:
        return true;
    default:
        return false;
    }
}

/// Annotator that always fails, so every node takes the fallback annotation.
class NoAnnotator : public AnnotatorClient {
public:
    Annotation describe(const ColorImage &, const Mask &, const std::string &) override {
        fail(Errc::ClientError, "no annotator configured");
    }
};

struct Options {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string log_level = "info";
    int iters = -1;

    // shared
    std::string bundle_dir, map_in, map_out, graph_in, graph_out, scene_path, out;
    std::string annotator = "auto";

    // synth
    std::string spec_path, edits_path;
    int frames = -1;

    // update
    std::string report_out, pose_source = "mock", pose_url;
    double noise_trans = 0.05, noise_rot_deg = 5.0;

    // ground
    std::string query, vlm = "auto", views_dir;

    // render
    std::string pose_path;

    // eval
    int held_out = 6;
};

Config load_effective_config(const Options &o) {
    Config cfg = o.config_path.empty() ? Config{} : load_config(o.config_path);
    if (o.iters >= 0) cfg.optimizer.iterations = o.iters;
    return cfg;
}

std::optional<SceneSpec> load_scene(const Options &o) {
    fs::path p = o.scene_path;
    if (p.empty() && !o.bundle_dir.empty()) p = fs::path(o.bundle_dir) / "scene.json";
    if (p.empty() || !fs::exists(p)) {
        if (!o.scene_path.empty()) fail(Errc::MissingFile, "missing scene file " + o.scene_path);
        return std::nullopt;
    }
    return spec_from_json(read_file(p));
}

std::unique_ptr<AnnotatorClient> make_annotator(const Options &o) {
    if (o.annotator == "none") return std::make_unique<NoAnnotator>();
    if (o.annotator == "url" || o.annotator == "auto") {
        if (auto c = annotator_from_env()) return c;
        if (o.annotator == "url") fail(Errc::InvalidArgument, "GSMIND_ANNOTATOR_URL is not set");
    }
    if (auto spec = load_scene(o)) return std::make_unique<ColorKeyAnnotator>(annotation_table(*spec));
    if (o.annotator == "mock") fail(Errc::MissingFile, "the mock annotator needs --scene");
    spdlog::warn("no annotator available; nodes get the fallback annotation");
    return std::make_unique<NoAnnotator>();
}

void write_json_file(const std::string &path, const std::string &text) {
    if (path == "-") {
        std::cout << text;
    } else {
        write_file_atomic(path, text);
    }
}

int cmd_synth(const Options &o) {
    SceneSpec spec = o.spec_path.empty() ? default_scene(o.seed) : spec_from_json(read_file(o.spec_path));
    if (o.frames > 0) spec.trajectory.frames = o.frames;
    EditScript edits;
    if (!o.edits_path.empty()) edits = edits_from_json(read_file(o.edits_path));
    const SynthResult r = edits.empty() ? gen_scene(spec) : mutate(spec, edits);
    save_bundle(r.bundle, o.out);
    write_file_atomic(fs::path(o.out) / "scene.json", spec_to_json(r.truth.spec));
    spdlog::info("wrote {} frames to {}", r.bundle.frames.size(), o.out);
    return kExitOk;
}

int cmd_map(const Options &o) {
    const Config cfg = load_effective_config(o);
    const Bundle bundle = load_bundle(o.bundle_dir);
    MappingConfig mc{cfg.association, cfg.optimizer};
    MappingStats stats;
    const GaussianMap map = build_map(bundle, mc, &stats);
    save_map(map, o.map_out);
    spdlog::info("map: {} gaussians, {} instances ({} matched, {} spawned, {} failed)", map.gaussians.size(),
                 map.instances.size(), stats.matched, stats.spawned, stats.failed);
    if (!o.graph_out.empty()) {
        auto client = make_annotator(o);
        write_json_file(o.graph_out, to_json(build_graph(map, *client, cfg.graph)));
    }
    return kExitOk;
}

int cmd_graph(const Options &o) {
    const Config cfg = load_effective_config(o);
    const GaussianMap map = load_map(o.map_in);
    auto client = make_annotator(o);
    write_json_file(o.out, to_json(build_graph(map, *client, cfg.graph)));
    return kExitOk;
}

int cmd_update(const Options &o) {
    const Config cfg = load_effective_config(o);
    GaussianMap map = load_map(o.map_in);
    const Bundle frames = load_bundle(o.bundle_dir);
    auto client = make_annotator(o);
    SceneGraph graph = o.graph_in.empty() ? build_graph(map, *client, cfg.graph) : graph_from_json(read_file(o.graph_in));

    std::unique_ptr<PoseProvider> provider;
    if (o.pose_source == "file") {
        std::map<std::uint32_t, Pose> poses;
        for (const auto &f : frames.frames) poses[f.frame_id] = f.pose;
        provider = std::make_unique<FilePoseProvider>(std::move(poses));
    } else if (o.pose_source == "mock") {
        provider = std::make_unique<MockPoseProvider>(o.noise_trans, o.noise_rot_deg * M_PI / 180.0, o.seed);
    } else {
        if (o.pose_url.empty()) fail(Errc::InvalidArgument, "--pose-source url needs --pose-url");
        provider = std::make_unique<HttpPoseProvider>(o.pose_url);
    }
    HistogramEmbedder embedder;
    OptimizerConfig opt = cfg.optimizer;
    opt.scene_extent = camera_extent(frames.frames);
    std::vector<ChangeReport> reports;
    for (const auto &frame : frames.frames) {
        ChangeReport r = run_update(map, frame, *provider, embedder, cfg.update, cfg.association, opt);
        graph = sync(graph, r.removed, r.added, map, *client, cfg.graph);
        spdlog::info("frame {}: {} removed, {} added", r.frame_id, r.removed.size(), r.added.size());
        reports.push_back(std::move(r));
    }
    save_map(map, o.map_out);
    if (!o.graph_out.empty()) write_json_file(o.graph_out, to_json(graph));
    if (!o.report_out.empty()) save_reports(reports, o.report_out);
    return kExitOk;
}

int cmd_ground(const Options &o) {
    const Config cfg = load_effective_config(o);
    if (o.map_in.empty()) fail(Errc::MissingFile, "ground needs --map");
    const GaussianMap map = load_map(o.map_in);
    std::unique_ptr<AnnotatorClient> annot;
    SceneGraph graph;
    if (o.graph_in.empty()) {
        annot = make_annotator(o);
        graph = build_graph(map, *annot, cfg.graph);
    } else {
        graph = graph_from_json(read_file(o.graph_in));
    }
    std::unique_ptr<VlmClient> client;
    if (o.vlm == "url" || o.vlm == "auto") client = vlm_from_env();
    if (!client && o.vlm == "url") fail(Errc::InvalidArgument, "GSMIND_VLM_URL is not set");
    if (!client) client = std::make_unique<MockVlm>();
    const auto spec = load_scene(o);
    const CategoryTextEmbedder embedder(spec ? spec->categories : default_categories(), map.feature_dim);
    const GroundingResult r = ground(o.query, map, graph, *client, embedder, cfg.mind);
    if (!o.views_dir.empty()) {
        fs::create_directories(o.views_dir);
        for (std::size_t i = 0; i < r.views.size(); ++i) {
            write_color_png(fs::path(o.views_dir) / ("roi_" + std::to_string(i) + ".png"), r.views[i].image);
        }
    }
    write_json_file(o.out, grounding_to_json(r));
    return kExitOk;
}

int cmd_render(const Options &o) {
    const GaussianMap map = load_map(o.map_in);
    const Pose pose = parse_pose(read_file(o.pose_path));
    const RenderOutput r = render_frame(map.gaussians, pose, map.intrinsics);
    fs::create_directories(o.out);
    write_color_png(fs::path(o.out) / "color.png", r.color);
    Image<std::uint16_t> depth(r.depth.width(), r.depth.height(), 1, 0);
    Image<std::uint16_t> ids(r.depth.width(), r.depth.height(), 1, 0);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        depth.data()[i] = static_cast<std::uint16_t>(std::min(65535L, std::lround(r.depth.data()[i] * 1000.0)));
        const auto id = r.instance_map.data()[i];
        ids.data()[i] = id == kNoInstance ? 0 : static_cast<std::uint16_t>(std::min<std::uint32_t>(id, 65535));
    }
    write_u16_png(fs::path(o.out) / "depth.png", depth);
    write_u16_png(fs::path(o.out) / "instances.png", ids);
    return kExitOk;
}

int cmd_eval(const Options &o) {
    const GaussianMap map = load_map(o.map_in);
    const auto spec = load_scene(o);
    if (!spec) fail(Errc::MissingFile, "eval needs --scene");
    const SegmentationMetrics seg = eval_segmentation(map, *spec);
    const auto poses = held_out_poses(*spec, o.held_out);
    std::vector<ColorImage> truth;
    for (const auto &p : poses) truth.push_back(render_truth(*spec, p).color);
    const PhotometricMetrics photo = eval_photometric(map, poses, truth);
    const RecoveryReport rec = instance_recovery(map, *spec);
    json assignment = json::object();
    for (const auto &[id, label] : rec.assignment) assignment[std::to_string(id)] = label;
    const json j{{"segmentation", {{"macc", seg.macc}, {"miou", seg.miou}, {"fmiou", seg.fmiou}, {"classes", seg.classes},
                                   {"confusion", seg.confusion}}},
                 {"photometric", {{"psnr", photo.psnr}, {"ssim", photo.ssim}, {"per_view_psnr", photo.per_view_psnr}}},
                 {"instances", {{"exact", rec.exact}, {"objects", rec.objects}, {"instances", rec.instances},
                                {"assignment", assignment}}}};
    write_json_file(o.out, j.dump(2) + "\n");
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char *const *argv) {
    CLI::App app{"Instance-aware Gaussian mapping, dynamic updates, scene graphs and grounding", "gsmind"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config_path, "JSON config overriding default constants")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Seed for synthetic scenes and mock providers");
    app.add_option("--log-level", o.log_level, "trace|debug|info|warn|error|off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    auto *synth = app.add_subcommand("synth", "Render a synthetic scene into a bundle");
    synth->add_option("--spec", o.spec_path, "Scene spec JSON (default: built-in desk scene)");
    synth->add_option("--edits", o.edits_path, "Edit script applied before rendering");
    synth->add_option("--frames", o.frames, "Override the trajectory frame count");
    synth->add_option("--out", o.out, "Output bundle directory")->required();

    const std::vector<std::string> annotators{"auto", "mock", "url", "none"};
    auto add_annotator = [&](CLI::App *c) {
        c->add_option("--annotator", o.annotator, "auto|mock|url|none")->check(CLI::IsMember(annotators));
        c->add_option("--scene", o.scene_path, "Scene spec for the mock annotator and category table");
    };

    auto *map = app.add_subcommand("map", "Build a map (and graph) from a bundle");
    map->add_option("--bundle", o.bundle_dir, "Input bundle directory")->required();
    map->add_option("--out", o.map_out, "Output map file")->required();
    map->add_option("--graph", o.graph_out, "Also write the scene graph JSON");
    map->add_option("--iters", o.iters, "Final optimization iterations");
    add_annotator(map);

    auto *update = app.add_subcommand("update", "Apply new frames to a map");
    update->add_option("--map", o.map_in, "Input map")->required();
    update->add_option("--bundle", o.bundle_dir, "Bundle with the new frames")->required();
    update->add_option("--out", o.map_out, "Updated map file")->required();
    update->add_option("--report", o.report_out, "Change report JSON");
    update->add_option("--graph-in", o.graph_in, "Existing scene graph (default: rebuilt from the map)");
    update->add_option("--graph", o.graph_out, "Updated scene graph JSON");
    update->add_option("--pose-source", o.pose_source, "file|mock|url")->check(CLI::IsMember({"file", "mock", "url"}));
    update->add_option("--pose-url", o.pose_url, "Pose service endpoint");
    update->add_option("--noise-trans", o.noise_trans, "Mock pose translation noise (m)");
    update->add_option("--noise-rot", o.noise_rot_deg, "Mock pose rotation noise (deg)");
    add_annotator(update);

    auto *graph = app.add_subcommand("graph", "Build the scene graph of a map");
    graph->add_option("--map", o.map_in, "Input map")->required();
    graph->add_option("--out", o.out, "Graph JSON")->required();
    add_annotator(graph);

    auto *groundc = app.add_subcommand("ground", "Ground a query to an instance");
    groundc->add_option("--map", o.map_in, "Input map");
    groundc->add_option("--graph", o.graph_in, "Scene graph JSON (default: rebuilt)");
    groundc->add_option("--query", o.query, "Referring expression")->required();
    groundc->add_option("--vlm", o.vlm, "auto|mock|url")->check(CLI::IsMember({"auto", "mock", "url"}));
    groundc->add_option("--views", o.views_dir, "Directory for the RoI images");
    groundc->add_option("--out", o.out, "Result JSON (- for stdout)")->default_val("-");
    add_annotator(groundc);

    auto *render = app.add_subcommand("render", "Render a map from a pose");
    render->add_option("--map", o.map_in, "Input map")->required();
    render->add_option("--pose", o.pose_path, "4x4 camera-to-world pose text file")->required();
    render->add_option("--out", o.out, "Output directory")->required();

    auto *eval = app.add_subcommand("eval", "Score a map against a synthetic scene");
    eval->add_option("--map", o.map_in, "Input map")->required();
    eval->add_option("--scene", o.scene_path, "Scene spec JSON")->required();
    eval->add_option("--held-out", o.held_out, "Held-out views for photometric metrics");
    eval->add_option("--out", o.out, "Metrics JSON (- for stdout)")->default_val("-");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    spdlog::set_level(spdlog::level::from_str(o.log_level));
    try {
        if (*synth) return cmd_synth(o);
        if (*map) return cmd_map(o);
        if (*update) return cmd_update(o);
        if (*graph) return cmd_graph(o);
        if (*groundc) return cmd_ground(o);
        if (*render) return cmd_render(o);
        if (*eval) return cmd_eval(o);
    } catch (const Error &e) {
        spdlog::error("{}", e.what());
        return is_data_error(e.code()) ? kExitData : kExitRuntime;
    } catch (const std::exception &e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace gsmind
