// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gsmind/geometry.hpp"
#include "gsmind/image.hpp"

namespace gsmind {

/// One 2D instance detection in a frame: mask plus unit feature.
struct InstanceObservation {
    std::uint32_t label = 0; // value in the frame's label image
    Mask mask;
    std::vector<float> feature;
    std::uint32_t frame_id = 0;
    std::optional<std::string> class_hint;
};

/// Posed RGB-D frame with its instance observations.
struct FrameObservation {
    std::uint32_t frame_id = 0;
    ColorImage color;
    DepthImage depth;
    Pose pose;
    LabelImage labels;
    std::vector<InstanceObservation> instances;
};

/// Binary mask of one label value.
Mask label_mask(const LabelImage &labels, std::uint32_t label);

} // namespace gsmind
