#include "semidirect/trajectory.hpp"

#include <cmath>
#include <string>

#include "semidirect/error.hpp"

namespace semidirect {

void Trajectory::push_back(double timestamp, const RigidTransform& pose) {
  if (!std::isfinite(timestamp)) throw Error(ErrorCode::InvalidArgument, "non-finite timestamp");
  if (!poses_.empty() && !(timestamp > poses_.back().timestamp)) {
    throw Error(ErrorCode::InvalidArgument,
                "timestamp " + std::to_string(timestamp) + " does not increase past " +
                    std::to_string(poses_.back().timestamp));
  }
  poses_.push_back({timestamp, pose});
}

double Trajectory::path_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < poses_.size(); ++i) {
    len += (poses_[i].pose.translation - poses_[i - 1].pose.translation).norm();
  }
  return len;
}

}  // namespace semidirect
