// SPDX-License-Identifier: Apache-2.0
#include "gsmind/config.hpp"

#include "json.hpp"

#include "gsmind/errors.hpp"
#include "gsmind/file_util.hpp"

namespace gsmind {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AssociationConfig, w_geo, w_iou, w_sem, tau)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, ssim, depth, normal, scale, r_allow)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LearningRates, center, color, opacity, scale, rotation)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimizerConfig, loss, lr, scene_extent, keyframe_stride,
                                                window_size, keyframe_translation, keyframe_rotation_deg,
                                                iterations, iterations_per_keyframe, prune_interval,
                                                prune_min_opacity, prune_max_scale, initial_scale_factor, beta1,
                                                beta2, epsilon, threads)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UpdateConfig, reloc_iterations, reloc_lr_translation,
                                                reloc_lr_rotation, reloc_lambda_depth, silhouette_threshold,
                                                visible_fraction, depth_tolerance, w_geo, w_app, w_sem,
                                                change_threshold, reobservation_iou, dilation_px,
                                                refine_iterations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GraphConfig, top_k_views, support_overlap, support_gap_min,
                                                support_gap_max, containment, up_axis)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MindConfig, top_k, fov_widen, fov_widen_max, fov_step, roi_scale,
                                                retries)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Config, association, optimizer, update, graph, mind)

namespace {

// Rejects keys the defaults do not know about, recursively.
void check_keys(const nlohmann::json &given, const nlohmann::json &known, const std::string &where) {
    if (!given.is_object()) fail(Errc::BadShape, "config: " + where + " must be an object");
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!known.contains(it.key())) fail(Errc::BadShape, "config: unknown key " + path);
        const auto &k = known.at(it.key());
        if (k.is_object()) {
            check_keys(*it, k, path);
        } else if (k.is_number() != it->is_number()) {
            fail(Errc::BadShape, "config: " + path + " must be a number");
        }
    }
}

} // namespace

std::string config_to_json(const Config &cfg) { return nlohmann::json(cfg).dump(2) + "\n"; }

Config config_from_json(const std::string &text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        fail(Errc::BadShape, std::string("config: ") + e.what());
    }
    check_keys(j, nlohmann::json(Config{}), "");
    try {
        return j.get<Config>();
    } catch (const nlohmann::json::exception &e) {
        fail(Errc::BadShape, std::string("config: ") + e.what());
    }
}

Config load_config(const std::string &path) { return config_from_json(read_file(path)); }

} // namespace gsmind
