// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "gsmind/bundle.hpp"
#include "gsmind/gaussian_map.hpp"
#include "gsmind/instance_engine.hpp"
#include "gsmind/optimizer.hpp"

namespace gsmind {

struct MappingConfig {
    AssociationConfig assoc;
    OptimizerConfig opt;
};

struct MappingStats {
    std::size_t frames = 0;
    std::size_t keyframes = 0;
    std::size_t matched = 0;
    std::size_t spawned = 0;
    std::size_t failed = 0;
    std::size_t pruned = 0;
    std::vector<double> final_losses;
};

/// 1.1 x the largest camera distance from the mean camera position (at least 1).
double camera_extent(std::span<const FrameObservation> frames);

/// Incremental mapping: per frame integrate, associate, densify; per keyframe a short
/// optimization over the recent window; then opt.iterations round-robin over all keyframes.
GaussianMap build_map(const Bundle &bundle, const MappingConfig &cfg = {}, MappingStats *stats = nullptr);

std::vector<Keyframe> keyframes_of(const Bundle &bundle, const OptimizerConfig &cfg = {});

} // namespace gsmind
