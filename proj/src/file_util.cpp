// SPDX-License-Identifier: Apache-2.0
#include "gsmind/file_util.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "gsmind/errors.hpp"

namespace gsmind {

std::filesystem::path temp_path_for(const std::filesystem::path &target) {
    auto tmp = target;
    tmp += ".tmp" + std::to_string(::getpid());
    return tmp;
}

void commit_temp(const std::filesystem::path &tmp, const std::filesystem::path &target) {
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(Errc::MissingFile, "cannot replace " + target.string());
    }
}

void write_file_atomic(const std::filesystem::path &path, const std::string &contents) {
    const auto tmp = temp_path_for(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::MissingFile, "cannot write " + path.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) fail(Errc::MissingFile, "short write to " + path.string());
    }
    commit_temp(tmp, path);
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::MissingFile, "missing file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace gsmind
