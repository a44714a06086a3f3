// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gsmind/updater.hpp"

namespace gsmind {

/// Alternating run lengths in raster order, starting with a (possibly empty) run of zeros.
std::vector<std::uint32_t> mask_to_rle(const Mask &mask);
Mask mask_from_rle(int width, int height, const std::vector<std::uint32_t> &runs);

/// ChangeReport JSON: frame_id, coarse_pose / refined_pose (16 row-major values), removed,
/// added, scores [{id, s_geo, s_app, s_sem, s_change}], update_mask {width, height, rle}.
std::string report_to_json(const ChangeReport &report);
ChangeReport report_from_json(const std::string &text);
/// A JSON array of reports, one per update frame.
std::string reports_to_json(const std::vector<ChangeReport> &reports);
std::vector<ChangeReport> reports_from_json(const std::string &text);

void save_reports(const std::vector<ChangeReport> &reports, const std::filesystem::path &path);
std::vector<ChangeReport> load_reports(const std::filesystem::path &path);

} // namespace gsmind
