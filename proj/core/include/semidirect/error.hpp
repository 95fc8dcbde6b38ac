#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace semidirect {

enum class ErrorCode {
  // geometry
  NonPositiveDepth,
  NonPositiveInverseDepth,
  ZeroDisparity,
  // imaging
  ImageTooSmall,
  TooManyLevels,
  DimensionMismatch,
  // feature front-end
  InsufficientMatches,
  DegenerateGeometry,
  // direct alignment
  EmptyOverlap,
  DivergedAlignment,
  // odometry
  NotInitialized,
  NoMatches,
  InsufficientDepth,
  // pose graph
  DisconnectedGraph,
  // io
  MissingFile,
  MalformedCalibration,
  UnpairableFrames,
  IoFailure,
  MalformedLine,
  // evaluation
  NoAssociations,
  TooFewPairs,
  TrajectoryTooShort,
  ZeroBaseline,
  // synth
  IndexOutOfRange,
  // generic
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library surfaces as this exception;
/// callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace semidirect
