// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsmind/bundle.hpp"
#include "gsmind/geometry.hpp"
#include "gsmind/scene_graph.hpp"

namespace gsmind {

enum class Shape { Box, Sphere };

struct SceneObject {
    std::uint32_t id = 1; // also the label value in rendered label images
    Shape shape = Shape::Box;
    Vec3 size = Vec3::Constant(0.1); // box extents; sphere uses size.x() as its diameter
    Vec3 position = Vec3::Zero();    // center
    double yaw = 0.0;                // about +z
    Vec3 color = Vec3::Constant(0.5);
    std::string category;
    std::string caption;
    std::string role = "Standalone";

    Aabb bounds() const;
};

struct Trajectory {
    enum class Kind { Orbit, Linear };
    Kind kind = Kind::Orbit;
    int frames = 60;
    Vec3 target{0.0, 0.0, 0.12};
    double radius = 0.85;
    double height = 1.35;
    double start_angle = 0.0;
    double sweep = 2.0 * M_PI;
    Vec3 start = Vec3::Zero();
    Vec3 end = Vec3::Zero();
};

struct SceneSpec {
    std::uint64_t seed = 0;
    double floor_half_extent = 2.5;
    double floor_height = 0.01;
    std::vector<SceneObject> objects;
    Trajectory trajectory;
    int width = 64;
    int height = 64;
    double focal = 64.0;
    std::uint32_t feature_dim = 512;
    double feature_noise = 0.05;
    int min_mask_pixels = 12;
    std::vector<std::string> categories; // one-hot basis for features

    Intrinsics intrinsics() const;
    /// Index of `category` in `categories`; throws InvalidArgument when absent.
    std::size_t category_index(const std::string &category) const;
    const SceneObject *find(std::uint32_t id) const;
};

std::vector<std::string> default_categories();

/// Five-object desk scene (desk, cabinet, two books on the desk, a ball) with seeded jitter.
SceneSpec default_scene(std::uint64_t seed);

std::vector<Pose> trajectory_poses(const SceneSpec &spec);
/// Poses halfway between consecutive orbit frames.
std::vector<Pose> held_out_poses(const SceneSpec &spec, int count);

struct TruthView {
    ColorImage color;
    DepthImage depth;
    LabelImage labels;
};

/// Analytic ray cast: color supersampled 3x3 per pixel, depth and labels at the pixel center.
TruthView render_truth(const SceneSpec &spec, const Pose &pose);

struct GroundTruth {
    SceneSpec spec;
    std::vector<Pose> poses;
};

struct SynthResult {
    Bundle bundle;
    GroundTruth truth;
};

/// Unit one-hot of the category plus N(0, noise^2) per component, renormalized. Seeded by
/// (spec seed, frame, object) so the result does not depend on generation order.
std::vector<float> synthetic_feature(const SceneSpec &spec, const std::string &category, std::uint32_t frame_id,
                                      std::uint32_t object_id);
/// One-hot text embedding aligned with synthetic_feature.
std::vector<float> category_embedding(const SceneSpec &spec, const std::string &category);

SynthResult gen_scene(const SceneSpec &spec);
/// Render a frame (quantized like the bundle) at an arbitrary pose.
FrameObservation synth_frame(const SceneSpec &spec, const Pose &pose, std::uint32_t frame_id);

struct Edit {
    enum class Kind { Remove, Add, Move };
    Kind kind = Kind::Remove;
    std::uint32_t id = 0;
    SceneObject object;              // Add
    Vec3 position = Vec3::Zero();    // Move
    double yaw = 0.0;                // Move
};

using EditScript = std::vector<Edit>;

/// Applies edits in order; throws InvalidEdit for unknown ids or duplicate additions.
SceneSpec apply_edits(const SceneSpec &spec, const EditScript &script);
SynthResult mutate(const SceneSpec &spec, const EditScript &script);

/// Annotator table keyed by object colors.
std::vector<ColorKey> annotation_table(const SceneSpec &spec);

std::string spec_to_json(const SceneSpec &spec);
SceneSpec spec_from_json(const std::string &text);

/// [{"op": "remove", "id"} | {"op": "add", "object"} | {"op": "move", "id", "position", "yaw"}]
std::string edits_to_json(const EditScript &script);
EditScript edits_from_json(const std::string &text);

} // namespace gsmind
