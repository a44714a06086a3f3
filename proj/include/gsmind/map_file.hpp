// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gsmind/gaussian_map.hpp"

namespace gsmind {

/// Binary map layout, little-endian:
///   "GSM1", u32 version
///   intrinsics (fx, fy, cx, cy: f64; width, height: i32), feature_dim u32, next_instance_id u32
///   u64 N, then contiguous arrays: centers f32x3N, colors f32x3N, log_scales f32x3N,
///   quaternions f32x4N, opacity logits f32xN, instance ids u32xN
///   voxel section: resolution f64, max_depth f64, u64 cells; per cell (sorted by key):
///   key i32x3, total u32, 3 slots (id u32, count u32), u32 run length, gaussian ids u32
///   instance section: u64 records; per record: id u32, weight f64, u32 D, feature f32xD,
///   u32 views; per view: frame_id u32, rotation f64x9 (row-major), translation f64x3, mask_pixels u32
std::string encode_map(const GaussianMap &map);
/// Throws BadMagic or TruncatedFile.
GaussianMap decode_map(std::string_view bytes);

void save_map(const GaussianMap &map, const std::filesystem::path &path);
GaussianMap load_map(const std::filesystem::path &path);

} // namespace gsmind
