// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gsmind/gaussian_map.hpp"
#include "gsmind/scene_graph.hpp"

namespace gsmind {

struct ParsedQuery {
    std::string target;
    std::vector<std::string> anchors;
    std::string raw;
};

/// Multimodal chat model: text prompt plus images in, text reply out.
class VlmClient {
public:
    virtual ~VlmClient() = default;
    /// Throws Error(ClientError) on transport failure.
    virtual std::string complete(const std::string &prompt, const std::vector<ColorImage> &images) = 0;
};

/// Text embedding aligned with the instance feature space.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<float> embed(const std::string &text) const = 0;
};

/// One-hot over a category table; the longest category name found in the text wins.
/// Text naming no category embeds to the zero vector.
class CategoryTextEmbedder : public TextEmbedder {
public:
    CategoryTextEmbedder(std::vector<std::string> categories, std::uint32_t dim)
        : categories_(std::move(categories)), dim_(dim) {}
    std::vector<float> embed(const std::string &text) const override;

private:
    std::vector<std::string> categories_;
    std::uint32_t dim_;
};

/// Deterministic stand-in for a VLM. Parse prompts are split on relation phrases
/// ("on", "near", "next to", ...); grounding prompts are answered by keyword overlap
/// between the query and each candidate's category, caption and parent node.
class MockVlm : public VlmClient {
public:
    std::string complete(const std::string &prompt, const std::vector<ColorImage> &images) override;
};

struct MindConfig {
    int top_k = 5;
    double fov_widen = 1.3;
    double fov_widen_max = 2.0;
    double fov_step = 0.1;
    int roi_scale = 4; // RoI images are rendered at this multiple of the map resolution
    int retries = 2;
};

struct BoxProjection {
    InstanceId id = kNoInstance;
    std::array<Vec2, 8> corners{};
    std::array<bool, 8> in_front{};
    bool in_frame = false;
    Vec2 label_position = Vec2::Zero();
};

struct RoiView {
    ColorImage image;
    Pose pose;
    Intrinsics intrinsics;
    double fov_factor = 1.0;
    std::vector<BoxProjection> boxes; // target first, then anchors
};

struct GroundingResult {
    InstanceId id = kNoInstance;
    Aabb bbox;
    std::vector<InstanceId> candidates;
    std::string reply;
    ParsedQuery query;
    std::vector<RoiView> views;
};

std::string parse_prompt(const std::string &query, const std::string &graph_json);
std::string grounding_prompt(const ParsedQuery &q, const std::vector<InstanceId> &candidates,
                             const std::string &graph_json);

/// Throws InvalidArgument on an empty query, ParseFailure after `retries` failed retries.
ParsedQuery parse_query(const std::string &text, const std::string &graph_json, VlmClient &client,
                        const MindConfig &cfg = {});

/// Top-k graph nodes by cosine between the description embedding and stored instance
/// features; ties go to the lower id. Throws EmptyScene.
std::vector<InstanceId> retrieve(const std::string &description, const SceneGraph &graph, const GaussianMap &map,
                                 const TextEmbedder &embedder, int k = 5);

/// Corners in the order (x, y, z) bits of the index: bit0 -> max x, bit1 -> max y, bit2 -> max z.
std::array<Vec3, 8> box_corners(const Aabb &b);

/// Re-aimed best view of the target (toward the target/anchor midpoint) with widened field
/// of view, box wireframes and id labels. Throws RoiUnrenderable.
RoiView roi_render(const GaussianMap &map, const SceneGraph &graph, InstanceId target,
                   const std::vector<InstanceId> &anchors, const MindConfig &cfg = {});

/// parse -> retrieve -> RoI views -> one VLM call -> validated id.
/// Throws ParseFailure, EmptyScene, GroundingFailure.
GroundingResult ground(const std::string &query, const GaussianMap &map, const SceneGraph &graph, VlmClient &client,
                       const TextEmbedder &embedder, const MindConfig &cfg = {});

std::string grounding_to_json(const GroundingResult &r);

} // namespace gsmind
