// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace gsmind {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `gsmind` tool. Subcommands: synth, map, update, graph, ground, render, eval.
int run_cli(int argc, const char *const *argv);

} // namespace gsmind
