#include "semidirect/error.hpp"

namespace semidirect {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::NonPositiveInverseDepth: return "NonPositiveInverseDepth";
    case ErrorCode::ZeroDisparity: return "ZeroDisparity";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::TooManyLevels: return "TooManyLevels";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::DivergedAlignment: return "DivergedAlignment";
    case ErrorCode::NotInitialized: return "NotInitialized";
    case ErrorCode::NoMatches: return "NoMatches";
    case ErrorCode::InsufficientDepth: return "InsufficientDepth";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedCalibration: return "MalformedCalibration";
    case ErrorCode::UnpairableFrames: return "UnpairableFrames";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NoAssociations: return "NoAssociations";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::TrajectoryTooShort: return "TrajectoryTooShort";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace semidirect
