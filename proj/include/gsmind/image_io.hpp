// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gsmind/image.hpp"

namespace gsmind {

/// 8-bit RGB PNG <-> [0,1] color (round to nearest on write).
void write_color_png(const std::filesystem::path &path, const ColorImage &image);
ColorImage read_color_png(const std::filesystem::path &path);
/// PNG file bytes in memory.
std::string encode_color_png(const ColorImage &image);

/// 16-bit single-channel PNG.
void write_u16_png(const std::filesystem::path &path, const Image<std::uint16_t> &image);
Image<std::uint16_t> read_u16_png(const std::filesystem::path &path);

/// Value quantized to the 8-bit grid used by write_color_png.
double quantize_u8(double v);

} // namespace gsmind
