// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsmind/gaussian_map.hpp"
#include "gsmind/image.hpp"

namespace gsmind {

enum class Role { Asset, Ordinary, Standalone };
enum class Relation { Supports, Contains, RootLink };

const char *to_string(Role r);
const char *to_string(Relation r);
std::optional<Role> parse_role(const std::string &text);
std::optional<Relation> parse_relation(const std::string &text);

/// Parent id used for the virtual root.
inline constexpr InstanceId kRootId = kNoInstance;

struct BestView {
    std::uint32_t frame_id = 0;
    Pose pose;
    double quality = 0.0;

    bool operator==(const BestView &) const = default;
};

struct SceneNode {
    InstanceId id = 0;
    Vec3 center = Vec3::Zero();
    Aabb bbox;
    std::string category = "unknown";
    std::string caption;
    Role role = Role::Standalone;
    std::optional<BestView> best_view;
    InstanceId parent = kRootId;
    Relation relation = Relation::RootLink;

    bool operator==(const SceneNode &) const = default;
};

struct SceneEdge {
    InstanceId parent = 0;
    InstanceId child = 0;
    Relation relation = Relation::Supports;
    double score = 0.0;

    bool operator==(const SceneEdge &) const = default;
};

/// Nodes form a forest under the virtual root through `parent`; `edges` holds every
/// inferred support/containment relation.
struct SceneGraph {
    std::map<InstanceId, SceneNode> nodes;
    std::vector<SceneEdge> edges;

    bool operator==(const SceneGraph &) const = default;
};

struct GraphConfig {
    int top_k_views = 5;
    double support_overlap = 0.3;
    double support_gap_min = -0.02;
    double support_gap_max = 0.10;
    double containment = 0.9;
    int up_axis = 2;
};

struct Annotation {
    std::string category;
    std::string caption;
    std::string role;
};

/// Describes an instance crop (category, caption, functional role).
class AnnotatorClient {
public:
    virtual ~AnnotatorClient() = default;
    /// Throws Error(ClientError) on transport failure.
    virtual Annotation describe(const ColorImage &crop, const Mask &mask, const std::string &prompt) = 0;
};

struct ColorKey {
    Vec3 color = Vec3::Zero();
    Annotation annotation;
};

/// Deterministic mock: returns the entry whose chromaticity is nearest the masked mean color.
class ColorKeyAnnotator : public AnnotatorClient {
public:
    explicit ColorKeyAnnotator(std::vector<ColorKey> table) : table_(std::move(table)) {}
    Annotation describe(const ColorImage &crop, const Mask &mask, const std::string &prompt) override;

private:
    std::vector<ColorKey> table_;
};

inline constexpr const char *kAnnotationPrompt =
    "Describe the masked object. Reply with its category, a one-sentence physical description, "
    "and its role: Asset (furniture that holds other objects), Ordinary (small movable object), "
    "or Standalone.";

/// (|m| / |Omega|) * (|H_visible| / |H|).
double view_quality(std::size_t mask_pixels, std::size_t image_pixels, std::size_t visible_gaussians,
                    std::size_t total_gaussians);
/// Quality of one logged view of an instance; throws EmptyInstance when it owns no Gaussians.
double view_quality(const GaussianMap &map, InstanceId id, const ObservingView &view);

/// Top-K views nearest the centroid of observing positions, then argmax quality (earliest on ties).
BestView best_view(const GaussianMap &map, InstanceId id, const GraphConfig &cfg = {});

/// Renders the best view, crops to the instance mask's bounding rectangle and queries the client.
/// Throws AnnotationUnavailable (client failure or nothing rendered) or AnnotationInvalid (bad role).
Annotation annotate(const GaussianMap &map, InstanceId id, const BestView &view, AnnotatorClient &client);

/// Center = mean of owned Gaussian centers; bbox = AABB of those centers.
SceneNode make_node(const GaussianMap &map, InstanceId id, AnnotatorClient &client, const GraphConfig &cfg = {});

std::vector<SceneEdge> infer_edges(const std::map<InstanceId, SceneNode> &nodes, const GraphConfig &cfg = {});

/// Assets and Standalones hang off the root; Ordinary nodes attach to the Asset with the
/// strongest incoming predicate, else the root.
SceneGraph build_hierarchy(std::map<InstanceId, SceneNode> nodes, std::vector<SceneEdge> edges);

SceneGraph build_graph(const GaussianMap &map, AnnotatorClient &client, const GraphConfig &cfg = {});

/// Deletes removed nodes (Assets with their subtree) and inserts the given new nodes,
/// then re-infers edges and re-attaches.
SceneGraph sync(const SceneGraph &graph, std::span<const InstanceId> removed, std::vector<SceneNode> added,
                const GraphConfig &cfg = {});
/// Same, building nodes for the added instances from the map.
SceneGraph sync(const SceneGraph &graph, std::span<const InstanceId> removed, std::span<const InstanceId> added,
                const GaussianMap &map, AnnotatorClient &client, const GraphConfig &cfg = {});

/// True when every node reaches the root through parents without revisiting a node.
bool graph_is_consistent(const SceneGraph &graph);

std::string to_json(const SceneGraph &graph);
SceneGraph graph_from_json(const std::string &text);

} // namespace gsmind
