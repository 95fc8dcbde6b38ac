#pragma once

#include <vector>

#include "semidirect/geometry.hpp"

namespace semidirect {

struct StampedPose {
  double timestamp = 0.0;  ///< [s]
  RigidTransform pose;     ///< camera -> world
};

/// Poses with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;

  /// Throws InvalidArgument unless `timestamp` exceeds the last one.
  void push_back(double timestamp, const RigidTransform& pose);
  void push_back(const StampedPose& p) { push_back(p.timestamp, p.pose); }

  std::size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }
  const StampedPose& operator[](std::size_t i) const { return poses_[i]; }
  StampedPose& operator[](std::size_t i) { return poses_[i]; }
  const StampedPose& back() const { return poses_.back(); }
  auto begin() const { return poses_.begin(); }
  auto end() const { return poses_.end(); }
  const std::vector<StampedPose>& poses() const { return poses_; }

  /// Sum of distances between consecutive positions [m].
  double path_length() const;

 private:
  std::vector<StampedPose> poses_;
};

}  // namespace semidirect
