// SPDX-License-Identifier: Apache-2.0
#include "gsmind/errors.hpp"

namespace gsmind {

const char *to_string(Errc code) {
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidRotation: return "InvalidRotation";
    case Errc::SingularCovariance: return "SingularCovariance";
    case Errc::BehindCamera: return "BehindCamera";
    case Errc::DegenerateLookAt: return "DegenerateLookAt";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidGradient: return "InvalidGradient";
    case Errc::UnknownInstance: return "UnknownInstance";
    case Errc::EmptyObservation: return "EmptyObservation";
    case Errc::UnknownVoxel: return "UnknownVoxel";
    case Errc::ZeroFeature: return "ZeroFeature";
    case Errc::InconsistentRecord: return "InconsistentRecord";
    case Errc::DivergedOptimization: return "DivergedOptimization";
    case Errc::NoValidPixels: return "NoValidPixels";
    case Errc::DivergedRefinement: return "DivergedRefinement";
    case Errc::InsufficientEvidence: return "InsufficientEvidence";
    case Errc::EmptyInstance: return "EmptyInstance";
    case Errc::NoObservations: return "NoObservations";
    case Errc::AnnotationUnavailable: return "AnnotationUnavailable";
    case Errc::AnnotationInvalid: return "AnnotationInvalid";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::EmptyScene: return "EmptyScene";
    case Errc::RoiUnrenderable: return "RoiUnrenderable";
    case Errc::GroundingFailure: return "GroundingFailure";
    case Errc::MissingFile: return "MissingFile";
    case Errc::BadShape: return "BadShape";
    case Errc::NonUnitFeature: return "NonUnitFeature";
    case Errc::BadDepthScale: return "BadDepthScale";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::InvalidEdit: return "InvalidEdit";
    case Errc::ClientError: return "ClientError";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string &what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(Errc code, const std::string &what) { throw Error(code, what); }

} // namespace gsmind
