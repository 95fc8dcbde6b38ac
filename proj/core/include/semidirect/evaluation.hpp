#pragma once

#include <vector>

#include "semidirect/dataset_io.hpp"
#include "semidirect/trajectory.hpp"

namespace semidirect {

/// An estimated pose and the ground-truth pose matched to it.
struct PosePair {
  double est_time = 0.0;
  double gt_time = 0.0;
  RigidTransform est;  ///< camera -> world, estimate frame
  RigidTransform gt;   ///< camera -> world, ground-truth frame
};

/// Default association window [s].
inline constexpr double kDefaultMaxTimeDifference = 0.02;

/// Greedy matching: candidate pairs within `max_dt` are accepted in order of
/// increasing time difference while neither side is taken. The result is
/// sorted by estimate time. Throws NoAssociations when nothing matches.
std::vector<PosePair> associate(const Trajectory& est, const Trajectory& gt,
                                double max_dt = kDefaultMaxTimeDifference);

struct AteOptions {
  /// Also estimate a global scale (for monocular baselines).
  bool similarity = false;
};

struct AteReport {
  double rmse = 0.0;    ///< [m]
  double median = 0.0;  ///< [m]
  std::vector<double> errors;  ///< per pair, after alignment [m]
  RigidTransform alignment;    ///< maps estimate positions onto ground truth
  double scale = 1.0;          ///< 1 unless AteOptions::similarity
};

/// Least-squares alignment of estimated onto ground-truth positions by the
/// SVD method (Umeyama), then per-pair Euclidean residuals. Throws
/// TooFewPairs below 3 pairs.
AteReport ate(const std::vector<PosePair>& pairs, const AteOptions& options = {});
AteReport ate(const Trajectory& est, const Trajectory& gt, const AteOptions& options = {},
              double max_dt = kDefaultMaxTimeDifference);

/// Segment lengths of the KITTI odometry protocol [m].
std::vector<double> kitti_segment_lengths();

struct SegmentStats {
  double length = 0.0;              ///< [m]
  std::size_t count = 0;            ///< segments of this length
  double translation_percent = 0.0;
  double rotation_deg_per_m = 0.0;
};

struct RpeReport {
  double translation_percent = 0.0;  ///< mean over every segment of every length
  double rotation_deg_per_m = 0.0;
  std::vector<SegmentStats> per_length;  ///< lengths that produced at least one segment
};

/// For every start pair and segment length L, the end is the first pair whose
/// ground-truth arc length from the start exceeds L. The discrepancy
/// (gt_rel)^-1 est_rel gives translation |t| / L and rotation angle / L.
/// Throws TrajectoryTooShort when the ground-truth path is shorter than the
/// longest requested segment.
RpeReport rpe(const std::vector<PosePair>& pairs, const std::vector<double>& segment_lengths = kitti_segment_lengths());
RpeReport rpe(const Trajectory& est, const Trajectory& gt,
              const std::vector<double>& segment_lengths = kitti_segment_lengths(),
              double max_dt = kDefaultMaxTimeDifference);

/// (vo - slam) / vo in percent; negative when SLAM is worse. Throws
/// ZeroBaseline unless vo_ate > 0.
double improvement(double vo_ate, double slam_ate);

std::vector<MetricRow> metric_rows(const AteReport& report, const std::string& dataset, const std::string& method);
std::vector<MetricRow> metric_rows(const RpeReport& report, const std::string& dataset, const std::string& method);

}  // namespace semidirect
