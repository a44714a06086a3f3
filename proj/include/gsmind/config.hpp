// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "gsmind/instance_engine.hpp"
#include "gsmind/mind.hpp"
#include "gsmind/optimizer.hpp"
#include "gsmind/scene_graph.hpp"
#include "gsmind/updater.hpp"

namespace gsmind {

/// Every tunable constant. Sections: association, optimizer, update, graph, mind.
struct Config {
    AssociationConfig association;
    OptimizerConfig optimizer;
    UpdateConfig update;
    GraphConfig graph;
    MindConfig mind;
};

/// Full JSON document with every field at its effective value.
std::string config_to_json(const Config &cfg);
/// Missing keys keep their defaults; unknown keys and wrong types raise BadShape.
Config config_from_json(const std::string &text);
Config load_config(const std::string &path);

} // namespace gsmind
