// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gsmind {

enum class Errc {
    InvalidArgument,
    InvalidRotation,
    SingularCovariance,
    BehindCamera,
    DegenerateLookAt,
    ShapeMismatch,
    InvalidGradient,
    UnknownInstance,
    EmptyObservation,
    UnknownVoxel,
    ZeroFeature,
    InconsistentRecord,
    DivergedOptimization,
    NoValidPixels,
    DivergedRefinement,
    InsufficientEvidence,
    EmptyInstance,
    NoObservations,
    AnnotationUnavailable,
    AnnotationInvalid,
    ParseFailure,
    EmptyScene,
    RoiUnrenderable,
    GroundingFailure,
    MissingFile,
    BadShape,
    NonUnitFeature,
    BadDepthScale,
    BadMagic,
    TruncatedFile,
    InvalidEdit,
    ClientError,
};

const char *to_string(Errc code);

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string &what);

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string &what);

} // namespace gsmind
