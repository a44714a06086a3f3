// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gsmind/mind.hpp"
#include "gsmind/scene_graph.hpp"
#include "gsmind/updater.hpp"

namespace gsmind {

std::string base64_encode(std::string_view bytes);
/// Throws InvalidArgument on characters outside the standard alphabet.
std::string base64_decode(std::string_view text);

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // starts with '/'
};

/// Splits an http URL; https and other schemes raise InvalidArgument.
Endpoint parse_endpoint(const std::string &url);

struct HttpOptions {
    double timeout_s = 60.0;
};

/// POST {image: base64 png, mask: base64 png, prompt} -> {category, caption, role}.
class HttpAnnotator : public AnnotatorClient {
public:
    explicit HttpAnnotator(const std::string &url, HttpOptions opts = {});
    Annotation describe(const ColorImage &crop, const Mask &mask, const std::string &prompt) override;

private:
    Endpoint endpoint_;
    HttpOptions opts_;
};

/// Chat-completions request with one user message holding the text and images as
/// data URLs; the reply is choices[0].message.content.
class HttpVlm : public VlmClient {
public:
    HttpVlm(const std::string &url, std::string api_key, std::string model, HttpOptions opts = {});
    std::string complete(const std::string &prompt, const std::vector<ColorImage> &images) override;

private:
    Endpoint endpoint_;
    std::string key_;
    std::string model_;
    HttpOptions opts_;
};

/// POST {frame_id, image: base64 png} -> {pose: 16 row-major camera-to-world values}.
class HttpPoseProvider : public PoseProvider {
public:
    explicit HttpPoseProvider(const std::string &url, HttpOptions opts = {});
    Pose coarse_pose(const FrameObservation &frame) override;

private:
    Endpoint endpoint_;
    HttpOptions opts_;
};

/// GSMIND_ANNOTATOR_URL, or null when unset.
std::unique_ptr<AnnotatorClient> annotator_from_env();
/// GSMIND_VLM_URL / GSMIND_VLM_KEY / GSMIND_VLM_MODEL, or null when the URL is unset.
std::unique_ptr<VlmClient> vlm_from_env();

} // namespace gsmind
