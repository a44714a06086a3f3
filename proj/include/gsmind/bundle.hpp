// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gsmind/frame.hpp"

namespace gsmind {

inline constexpr const char *kBundleFormat = "gsmind-bundle-1";

struct BundleMeta {
    Intrinsics intrinsics;
    double depth_scale = 1000.0; // stored units per meter
    std::uint32_t feature_dim = 512;
};

/// Ingestion bundle: posed RGB-D frames with 2D instance masks and features.
///
/// Directory layout:
///   meta.json                  format, intrinsics, depth_scale, feature_dim, frames (ids)
///   color/NNNNNN.png           8-bit RGB
///   depth/NNNNNN.png           16-bit, meters * depth_scale, 0 = invalid
///   label/NNNNNN.png           16-bit instance labels, 0 = background
///   pose/NNNNNN.txt            4x4 camera-to-world, row-major
///   instances/NNNNNN.json      [{"label", "row", "class_hint"?}]
///   features/NNNNNN.f32        little-endian float32, rows x feature_dim
struct Bundle {
    BundleMeta meta;
    std::vector<FrameObservation> frames;
};

/// Builds per-instance masks from the label image; `rows[i]` is the feature of `labels[i]`.
void attach_instances(FrameObservation &frame, const std::vector<std::uint32_t> &labels,
                      const std::vector<std::vector<float>> &rows);

/// Writes atomically file by file. Color and depth are quantized to the on-disk grids.
void save_bundle(const Bundle &bundle, const std::filesystem::path &dir);

/// Validates shapes, label coverage and feature norms (off-unit rows are renormalized with a warning).
/// Throws MissingFile, BadShape, BadDepthScale, NonUnitFeature (zero rows).
Bundle load_bundle(const std::filesystem::path &dir);

/// Depth quantized to the stored grid of `depth_scale`.
double quantize_depth(double meters, double depth_scale);

std::string frame_stem(std::uint32_t frame_id);

} // namespace gsmind
