// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gsmind/evaluation.hpp"
#include "gsmind/pipeline.hpp"
#include "gsmind/scene_graph.hpp"
#include "gsmind/synth.hpp"
#include "gsmind/updater.hpp"

namespace gsmind {

/// Removal / addition / movement edits for the dynamic-update protocol.
Edit make_removal(const SceneSpec &spec, std::size_t trial);
Edit make_addition(const SceneSpec &spec, std::mt19937_64 &rng);
Edit make_movement(const SceneSpec &spec, std::size_t trial, std::mt19937_64 &rng);

/// Free floor position for a footprint of radius `r` away from every object, inside |x|,|y| <= extent.
Vec3 free_floor_position(const SceneSpec &spec, double r, double extent, std::mt19937_64 &rng,
                         std::uint32_t ignore_id = 0);

/// Trajectory pose seeing the most pixels of `object_id` in `spec`.
Pose best_truth_view(const SceneSpec &spec, std::uint32_t object_id);

struct TrialConfig {
    UpdateConfig update;
    AssociationConfig assoc;
    OptimizerConfig opt;
    double noise_translation = 0.02;
    double noise_rotation = 2.0 * M_PI / 180.0;
    double addition_iou = 0.25;
};

struct TrialOutcome {
    UpdateTrial trial;
    std::vector<ChangeReport> reports;
    GaussianMap map;
};

/// Applies `edit`, renders the update view(s), runs the updater on a copy of `base` and
/// judges the outcome (removed: every base instance of the edited object deleted; added:
/// a new instance box with IoU >= addition_iou against the object's new box).
TrialOutcome run_trial(const GaussianMap &base, const SceneSpec &spec, const Edit &edit, std::uint64_t seed,
                       const TrialConfig &cfg = {});

} // namespace gsmind
