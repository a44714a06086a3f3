// SPDX-License-Identifier: Apache-2.0
#include "gsmind/bundle.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gsmind/file_util.hpp"
#include "gsmind/image_io.hpp"

namespace gsmind {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature blocks assume a little-endian host");

std::string frame_stem(std::uint32_t frame_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06u", frame_id);
    return buf;
}

double quantize_depth(double meters, double depth_scale) {
    if (!(meters > 0.0)) return 0.0;
    const double q = std::round(meters * depth_scale);
    return std::min(q, 65535.0) / depth_scale;
}

void attach_instances(FrameObservation &frame, const std::vector<std::uint32_t> &labels,
                      const std::vector<std::vector<float>> &rows) {
    if (labels.size() != rows.size()) fail(Errc::BadShape, "label and feature row counts differ");
    frame.instances.clear();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        InstanceObservation obs;
        obs.label = labels[i];
        obs.mask = label_mask(frame.labels, labels[i]);
        obs.feature = rows[i];
        obs.frame_id = frame.frame_id;
        frame.instances.push_back(std::move(obs));
    }
}

void save_bundle(const Bundle &bundle, const fs::path &dir) {
    const auto &K = bundle.meta.intrinsics;
    if (!(bundle.meta.depth_scale > 0.0)) fail(Errc::BadDepthScale, "depth scale must be positive");
    for (const char *sub : {"color", "depth", "label", "pose", "instances", "features"}) {
        fs::create_directories(dir / sub);
    }
    json frames = json::array();
    for (const auto &f : bundle.frames) {
        const std::string stem = frame_stem(f.frame_id);
        write_color_png(dir / "color" / (stem + ".png"), f.color);
        Image<std::uint16_t> depth(f.depth.width(), f.depth.height(), 1);
        for (std::size_t i = 0; i < depth.size(); ++i) {
            const double d = f.depth.data()[i];
            depth.data()[i] = d > 0.0 ? static_cast<std::uint16_t>(std::min(std::round(d * bundle.meta.depth_scale), 65535.0))
                                      : 0;
        }
        write_u16_png(dir / "depth" / (stem + ".png"), depth);
        Image<std::uint16_t> labels(f.labels.width(), f.labels.height(), 1);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (f.labels.data()[i] > 65535) fail(Errc::BadShape, "label exceeds 16 bits");
            labels.data()[i] = static_cast<std::uint16_t>(f.labels.data()[i]);
        }
        write_u16_png(dir / "label" / (stem + ".png"), labels);
        write_file_atomic(dir / "pose" / (stem + ".txt"), format_pose(f.pose));

        json inst = json::array();
        std::string block;
        for (std::size_t r = 0; r < f.instances.size(); ++r) {
            const auto &obs = f.instances[r];
            if (obs.feature.size() != bundle.meta.feature_dim) fail(Errc::BadShape, "feature row has wrong length");
            json e = {{"label", obs.label}, {"row", r}};
            if (obs.class_hint) e["class_hint"] = *obs.class_hint;
            inst.push_back(std::move(e));
            block.append(reinterpret_cast<const char *>(obs.feature.data()), obs.feature.size() * sizeof(float));
        }
        write_file_atomic(dir / "instances" / (stem + ".json"), inst.dump(2) + "\n");
        write_file_atomic(dir / "features" / (stem + ".f32"), block);
        frames.push_back(f.frame_id);
    }
    json meta = {{"format", kBundleFormat},
                 {"width", K.width},
                 {"height", K.height},
                 {"fx", K.fx},
                 {"fy", K.fy},
                 {"cx", K.cx},
                 {"cy", K.cy},
                 {"depth_scale", bundle.meta.depth_scale},
                 {"feature_dim", bundle.meta.feature_dim},
                 {"frame_count", bundle.frames.size()},
                 {"frames", std::move(frames)}};
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

namespace {

void require_file(const fs::path &p, std::uint32_t frame_id) {
    if (!fs::exists(p)) fail(Errc::MissingFile, "frame " + std::to_string(frame_id) + ": missing " + p.string());
}

} // namespace

Bundle load_bundle(const fs::path &dir) {
    if (!fs::is_directory(dir)) fail(Errc::MissingFile, "bundle directory not found: " + dir.string());
    Bundle b;
    json meta;
    try {
        meta = json::parse(read_file(dir / "meta.json"));
    } catch (const json::exception &e) {
        fail(Errc::BadShape, std::string("meta.json: ") + e.what());
    }
    std::vector<std::uint32_t> ids;
    try {
        auto &K = b.meta.intrinsics;
        K.width = meta.at("width").get<int>();
        K.height = meta.at("height").get<int>();
        K.fx = meta.at("fx").get<double>();
        K.fy = meta.at("fy").get<double>();
        K.cx = meta.at("cx").get<double>();
        K.cy = meta.at("cy").get<double>();
        b.meta.depth_scale = meta.at("depth_scale").get<double>();
        b.meta.feature_dim = meta.at("feature_dim").get<std::uint32_t>();
        ids = meta.at("frames").get<std::vector<std::uint32_t>>();
        if (meta.contains("frame_count") && meta["frame_count"].get<std::size_t>() != ids.size()) {
            fail(Errc::BadShape, "frame_count does not match the frame list");
        }
    } catch (const json::exception &e) {
        fail(Errc::BadShape, std::string("meta.json: ") + e.what());
    }
    if (!(b.meta.depth_scale > 0.0) || !std::isfinite(b.meta.depth_scale)) {
        fail(Errc::BadDepthScale, "depth_scale must be positive");
    }
    try {
        b.meta.intrinsics.validate();
    } catch (const Error &e) {
        fail(Errc::BadShape, e.what());
    }
    const auto &K = b.meta.intrinsics;
    const std::size_t D = b.meta.feature_dim;
    if (D == 0) fail(Errc::BadShape, "feature_dim must be positive");

    for (std::uint32_t id : ids) {
        const std::string stem = frame_stem(id);
        const fs::path color_p = dir / "color" / (stem + ".png"), depth_p = dir / "depth" / (stem + ".png"),
                       label_p = dir / "label" / (stem + ".png"), pose_p = dir / "pose" / (stem + ".txt"),
                       inst_p = dir / "instances" / (stem + ".json"), feat_p = dir / "features" / (stem + ".f32");
        for (const auto &p : {color_p, depth_p, label_p, pose_p, inst_p, feat_p}) require_file(p, id);

        FrameObservation f;
        f.frame_id = id;
        f.color = read_color_png(color_p);
        const auto depth16 = read_u16_png(depth_p);
        const auto label16 = read_u16_png(label_p);
        const std::string where = "frame " + std::to_string(id) + ": ";
        if (!f.color.same_shape(K.width, K.height, 3) || !depth16.same_shape(K.width, K.height, 1) ||
            !label16.same_shape(K.width, K.height, 1)) {
            fail(Errc::BadShape, where + "image size does not match intrinsics");
        }
        f.depth = DepthImage(K.width, K.height, 1);
        for (std::size_t i = 0; i < depth16.size(); ++i) f.depth.data()[i] = depth16.data()[i] / b.meta.depth_scale;
        f.labels = LabelImage(K.width, K.height, 1);
        for (std::size_t i = 0; i < label16.size(); ++i) f.labels.data()[i] = label16.data()[i];
        try {
            f.pose = parse_pose(read_file(pose_p));
        } catch (const Error &e) {
            fail(Errc::BadShape, where + e.what());
        }

        json inst;
        try {
            inst = json::parse(read_file(inst_p));
        } catch (const json::exception &e) {
            fail(Errc::BadShape, where + e.what());
        }
        const std::string block = read_file(feat_p);
        if (block.size() % (D * sizeof(float)) != 0) fail(Errc::BadShape, where + "feature block size");
        const std::size_t rows = block.size() / (D * sizeof(float));

        std::set<std::uint32_t> present;
        for (auto v : f.labels.data()) {
            if (v != 0) present.insert(v);
        }
        std::map<std::uint32_t, std::size_t> label_row;
        std::map<std::uint32_t, std::string> hints;
        try {
            for (const auto &e : inst) {
                const auto label = e.at("label").get<std::uint32_t>();
                const auto row = e.at("row").get<std::size_t>();
                if (row >= rows) fail(Errc::BadShape, where + "feature row out of range");
                if (!label_row.emplace(label, row).second) fail(Errc::BadShape, where + "duplicate label entry");
                if (e.contains("class_hint")) hints[label] = e["class_hint"].get<std::string>();
            }
        } catch (const json::exception &e) {
            fail(Errc::BadShape, where + e.what());
        }
        for (std::uint32_t v : present) {
            if (!label_row.count(v)) fail(Errc::BadShape, where + "label " + std::to_string(v) + " has no metadata");
        }
        for (const auto &[label, row] : label_row) {
            if (!present.count(label)) {
                spdlog::warn("{}label {} has no pixels; skipped", where, label);
                continue;
            }
            InstanceObservation obs;
            obs.label = label;
            obs.frame_id = id;
            obs.mask = label_mask(f.labels, label);
            obs.feature.resize(D);
            std::memcpy(obs.feature.data(), block.data() + row * D * sizeof(float), D * sizeof(float));
            double norm = 0.0;
            for (float x : obs.feature) norm += static_cast<double>(x) * x;
            norm = std::sqrt(norm);
            if (!(norm > 0.0) || !std::isfinite(norm)) {
                fail(Errc::NonUnitFeature, where + "label " + std::to_string(label) + " has a zero feature");
            }
            if (std::abs(norm - 1.0) > 1e-3) {
                spdlog::warn("{}label {} feature norm {:.4f}; renormalized", where, label, norm);
                for (float &x : obs.feature) x = static_cast<float>(x / norm);
            }
            if (auto it = hints.find(label); it != hints.end()) obs.class_hint = it->second;
            f.instances.push_back(std::move(obs));
        }
        b.frames.push_back(std::move(f));
    }
    return b;
}

} // namespace gsmind
