// SPDX-License-Identifier: Apache-2.0
#include "gsmind/clients.hpp"

#include <array>
#include <cmath>
#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

#include "gsmind/errors.hpp"
#include "gsmind/image_io.hpp"

namespace gsmind {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

ColorImage mask_image(const Mask &mask) {
    ColorImage img(mask.width(), mask.height(), 3, 0.0);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            for (int c = 0; c < 3; ++c) img(x, y, c) = mask(x, y) ? 1.0 : 0.0;
        }
    }
    return img;
}

json post_json(const Endpoint &ep, const HttpOptions &opts, const json &body, const httplib::Headers &headers = {}) {
    httplib::Client cli(ep.origin);
    const auto secs = static_cast<time_t>(opts.timeout_s);
    const auto usecs = static_cast<time_t>((opts.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
    if (!res) fail(Errc::ClientError, ep.origin + ep.path + ": " + httplib::to_string(res.error()));
    if (res->status != 200) fail(Errc::ClientError, ep.origin + ep.path + ": HTTP " + std::to_string(res->status));
    try {
        return json::parse(res->body);
    } catch (const json::exception &e) {
        fail(Errc::ClientError, std::string("malformed reply: ") + e.what());
    }
}

std::string env_or(const char *name, const std::string &fallback = {}) {
    const char *v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

} // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8) | static_cast<std::uint8_t>(bytes[i + 2]);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
        if (rest == 2) v |= static_cast<std::uint8_t>(bytes[i + 1]) << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::array<int, 256> table;
    table.fill(-1);
    for (int k = 0; k < 64; ++k) table[static_cast<unsigned char>(kAlphabet[k])] = k;
    std::string out;
    std::uint32_t acc = 0;
    int bits = 0;
    std::size_t pad = 0;
    for (char ch : text) {
        if (ch == '=') {
            ++pad;
            continue;
        }
        const int v = table[static_cast<unsigned char>(ch)];
        if (v < 0 || pad > 0) fail(Errc::InvalidArgument, "invalid base64");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>((acc >> bits) & 0xff);
        }
    }
    if (pad > 2) fail(Errc::InvalidArgument, "invalid base64 padding");
    return out;
}

Endpoint parse_endpoint(const std::string &url) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) fail(Errc::InvalidArgument, "only http:// endpoints are supported: " + url);
    const auto slash = url.find('/', scheme.size());
    Endpoint ep;
    ep.origin = url.substr(0, slash);
    ep.path = slash == std::string::npos ? "/" : url.substr(slash);
    if (ep.origin.size() == scheme.size()) fail(Errc::InvalidArgument, "endpoint has no host: " + url);
    return ep;
}

HttpAnnotator::HttpAnnotator(const std::string &url, HttpOptions opts) : endpoint_(parse_endpoint(url)), opts_(opts) {}

Annotation HttpAnnotator::describe(const ColorImage &crop, const Mask &mask, const std::string &prompt) {
    const json body{{"image", base64_encode(encode_color_png(crop))},
                    {"mask", base64_encode(encode_color_png(mask_image(mask)))},
                    {"prompt", prompt}};
    const json reply = post_json(endpoint_, opts_, body);
    try {
        return {reply.at("category").get<std::string>(), reply.at("caption").get<std::string>(),
                reply.at("role").get<std::string>()};
    } catch (const json::exception &e) {
        fail(Errc::ClientError, std::string("annotator reply: ") + e.what());
    }
}

HttpVlm::HttpVlm(const std::string &url, std::string api_key, std::string model, HttpOptions opts)
    : endpoint_(parse_endpoint(url)), key_(std::move(api_key)), model_(std::move(model)), opts_(opts) {}

std::string HttpVlm::complete(const std::string &prompt, const std::vector<ColorImage> &images) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const auto &img : images) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_color_png(img))}}}});
    }
    json body{{"model", model_}, {"temperature", 0}, {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
    const json reply = post_json(endpoint_, opts_, body, headers);
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception &e) {
        fail(Errc::ClientError, std::string("vlm reply: ") + e.what());
    }
}

HttpPoseProvider::HttpPoseProvider(const std::string &url, HttpOptions opts)
    : endpoint_(parse_endpoint(url)), opts_(opts) {}

Pose HttpPoseProvider::coarse_pose(const FrameObservation &frame) {
    const json body{{"frame_id", frame.frame_id}, {"image", base64_encode(encode_color_png(frame.color))}};
    const json reply = post_json(endpoint_, opts_, body);
    std::vector<double> v;
    try {
        v = reply.at("pose").get<std::vector<double>>();
    } catch (const json::exception &e) {
        fail(Errc::ClientError, std::string("pose reply: ") + e.what());
    }
    if (v.size() != 16) fail(Errc::ClientError, "pose reply needs 16 values");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(4 * r + c)];
    }
    const Pose p = Pose::from_matrix(m);
    const bool rigid = (p.rotation.transpose() * p.rotation - Mat3::Identity()).norm() < 1e-6 &&
                       std::abs(p.rotation.determinant() - 1.0) < 1e-6 &&
                       (m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() < 1e-9;
    if (!rigid) fail(Errc::ClientError, "pose reply is not a rigid transform");
    return p;
}

std::unique_ptr<AnnotatorClient> annotator_from_env() {
    const std::string url = env_or("GSMIND_ANNOTATOR_URL");
    if (url.empty()) return nullptr;
    return std::make_unique<HttpAnnotator>(url);
}

std::unique_ptr<VlmClient> vlm_from_env() {
    const std::string url = env_or("GSMIND_VLM_URL");
    if (url.empty()) return nullptr;
    return std::make_unique<HttpVlm>(url, env_or("GSMIND_VLM_KEY"), env_or("GSMIND_VLM_MODEL", "qwen2.5-vl-72b-instruct"));
}

} // namespace gsmind
