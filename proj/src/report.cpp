// SPDX-License-Identifier: Apache-2.0
#include "gsmind/report.hpp"

#include "json.hpp"

#include "gsmind/errors.hpp"
#include "gsmind/file_util.hpp"

namespace gsmind {

using nlohmann::json;

std::vector<std::uint32_t> mask_to_rle(const Mask &mask) {
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t n = 0;
    for (auto v : mask.data()) {
        const std::uint8_t b = v != 0;
        if (b != current) {
            runs.push_back(n);
            current = b;
            n = 0;
        }
        ++n;
    }
    if (n > 0 || runs.empty()) runs.push_back(n);
    return runs;
}

Mask mask_from_rle(int width, int height, const std::vector<std::uint32_t> &runs) {
    if (width < 0 || height < 0) fail(Errc::BadShape, "negative mask extent");
    Mask m(width, height, 1, 0);
    std::size_t pos = 0;
    std::uint8_t value = 0;
    auto data = m.data();
    for (std::uint32_t r : runs) {
        if (r > data.size() - pos) fail(Errc::BadShape, "mask runs exceed the image");
        std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(pos), r, value);
        pos += r;
        value ^= 1;
    }
    if (pos != data.size()) fail(Errc::BadShape, "mask runs do not cover the image");
    return m;
}

namespace {

json pose_json(const Pose &p) {
    const Mat4 m = p.matrix();
    json a = json::array();
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
    }
    return a;
}

Pose pose_from(const json &j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 16) fail(Errc::BadShape, "pose needs 16 values");
    Pose p;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[static_cast<std::size_t>(4 * r + c)];
        p.translation[r] = v[static_cast<std::size_t>(4 * r + 3)];
    }
    return p;
}

json to_j(const ChangeReport &r) {
    json scores = json::array();
    for (const auto &s : r.scores) {
        scores.push_back({{"id", s.id}, {"s_geo", s.s_geo}, {"s_app", s.s_app}, {"s_sem", s.s_sem},
                          {"s_change", s.s_change}});
    }
    return {{"frame_id", r.frame_id},
            {"coarse_pose", pose_json(r.coarse_pose)},
            {"refined_pose", pose_json(r.refined_pose)},
            {"removed", r.removed},
            {"added", r.added},
            {"scores", scores},
            {"update_mask",
             {{"width", r.update_mask.width()}, {"height", r.update_mask.height()}, {"rle", mask_to_rle(r.update_mask)}}}};
}

ChangeReport from_j(const json &j) {
    ChangeReport r;
    r.frame_id = j.at("frame_id").get<std::uint32_t>();
    r.coarse_pose = pose_from(j.at("coarse_pose"));
    r.refined_pose = pose_from(j.at("refined_pose"));
    r.removed = j.at("removed").get<std::vector<InstanceId>>();
    r.added = j.at("added").get<std::vector<InstanceId>>();
    for (const auto &s : j.at("scores")) {
        ChangeScores c;
        c.id = s.at("id").get<InstanceId>();
        c.s_geo = s.at("s_geo").get<double>();
        c.s_app = s.at("s_app").get<double>();
        c.s_sem = s.at("s_sem").get<double>();
        c.s_change = s.at("s_change").get<double>();
        r.scores.push_back(c);
    }
    const auto &m = j.at("update_mask");
    r.update_mask = mask_from_rle(m.at("width").get<int>(), m.at("height").get<int>(),
                                  m.at("rle").get<std::vector<std::uint32_t>>());
    return r;
}

template <typename Fn>
auto guarded(const std::string &text, Fn &&fn) {
    try {
        return fn(json::parse(text));
    } catch (const json::exception &e) {
        fail(Errc::BadShape, std::string("report: ") + e.what());
    }
}

} // namespace

std::string report_to_json(const ChangeReport &report) { return to_j(report).dump(2) + "\n"; }

ChangeReport report_from_json(const std::string &text) {
    return guarded(text, [](const json &j) { return from_j(j); });
}

std::string reports_to_json(const std::vector<ChangeReport> &reports) {
    json a = json::array();
    for (const auto &r : reports) a.push_back(to_j(r));
    return a.dump(2) + "\n";
}

std::vector<ChangeReport> reports_from_json(const std::string &text) {
    return guarded(text, [](const json &j) {
        if (!j.is_array()) fail(Errc::BadShape, "report file must hold an array");
        std::vector<ChangeReport> out;
        for (const auto &e : j) out.push_back(from_j(e));
        return out;
    });
}

void save_reports(const std::vector<ChangeReport> &reports, const std::filesystem::path &path) {
    write_file_atomic(path, reports_to_json(reports));
}

std::vector<ChangeReport> load_reports(const std::filesystem::path &path) { return reports_from_json(read_file(path)); }

} // namespace gsmind
