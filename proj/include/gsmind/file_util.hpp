// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

namespace gsmind {

/// Sibling temporary path for write-then-rename.
std::filesystem::path temp_path_for(const std::filesystem::path &target);
/// Renames `tmp` over `target`.
void commit_temp(const std::filesystem::path &tmp, const std::filesystem::path &target);

/// Atomically replaces `path` with `contents`.
void write_file_atomic(const std::filesystem::path &path, const std::string &contents);
/// Throws MissingFile.
std::string read_file(const std::filesystem::path &path);

} // namespace gsmind
