#include "semidirect/evaluation.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "semidirect/error.hpp"

namespace semidirect {

std::vector<PosePair> associate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  if (est.empty() || gt.empty()) throw Error(ErrorCode::NoAssociations, "cannot associate an empty trajectory");
  if (!(max_dt >= 0.0)) throw Error(ErrorCode::InvalidArgument, "max_dt must be non-negative");

  struct Candidate {
    double dt;
    std::size_t e;
    std::size_t g;
  };
  std::vector<Candidate> candidates;
  std::size_t lo = 0;
  for (std::size_t e = 0; e < est.size(); ++e) {
    const double t = est[e].timestamp;
    while (lo < gt.size() && gt[lo].timestamp < t - max_dt) ++lo;
    for (std::size_t g = lo; g < gt.size() && gt[g].timestamp <= t + max_dt; ++g) {
      candidates.push_back({std::abs(gt[g].timestamp - t), e, g});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dt, a.e, a.g) < std::tie(b.dt, b.e, b.g);
  });

  std::vector<char> est_used(est.size(), 0);
  std::vector<char> gt_used(gt.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  for (const Candidate& c : candidates) {
    if (est_used[c.e] || gt_used[c.g]) continue;
    est_used[c.e] = gt_used[c.g] = 1;
    matches.emplace_back(c.e, c.g);
  }
  if (matches.empty()) {
    throw Error(ErrorCode::NoAssociations, "no estimate lies within " + std::to_string(max_dt) +
                                               " s of a ground-truth timestamp");
  }
  std::sort(matches.begin(), matches.end());
  std::vector<PosePair> out;
  out.reserve(matches.size());
  for (const auto& [e, g] : matches) out.push_back({est[e].timestamp, gt[g].timestamp, est[e].pose, gt[g].pose});
  return out;
}

AteReport ate(const std::vector<PosePair>& pairs, const AteOptions& options) {
  const std::size_t n = pairs.size();
  if (n < 3) throw Error(ErrorCode::TooFewPairs, std::to_string(n) + " associated pairs, need at least 3");

  Vector3d mu_e = Vector3d::Zero();
  Vector3d mu_g = Vector3d::Zero();
  for (const PosePair& p : pairs) {
    mu_e += p.est.translation;
    mu_g += p.gt.translation;
  }
  mu_e /= static_cast<double>(n);
  mu_g /= static_cast<double>(n);

  Matrix3d sigma = Matrix3d::Zero();
  double var_e = 0.0;
  for (const PosePair& p : pairs) {
    const Vector3d de = p.est.translation - mu_e;
    sigma += (p.gt.translation - mu_g) * de.transpose();
    var_e += de.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  var_e /= static_cast<double>(n);

  const Eigen::JacobiSVD<Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3d s = Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2) = -1.0;
  const Matrix3d r = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();

  AteReport report;
  report.scale = options.similarity && var_e > 0.0 ? svd.singularValues().dot(s) / var_e : 1.0;
  report.alignment = RigidTransform(r, mu_g - report.scale * r * mu_e);

  report.errors.reserve(n);
  double sum_sq = 0.0;
  for (const PosePair& p : pairs) {
    const Vector3d aligned = report.scale * (r * p.est.translation) + report.alignment.translation;
    const double e = (aligned - p.gt.translation).norm();
    report.errors.push_back(e);
    sum_sq += e * e;
  }
  report.rmse = std::sqrt(sum_sq / static_cast<double>(n));

  std::vector<double> sorted = report.errors;
  std::sort(sorted.begin(), sorted.end());
  report.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return report;
}

AteReport ate(const Trajectory& est, const Trajectory& gt, const AteOptions& options, double max_dt) {
  return ate(associate(est, gt, max_dt), options);
}

std::vector<double> kitti_segment_lengths() { return {100, 200, 300, 400, 500, 600, 700, 800}; }

RpeReport rpe(const std::vector<PosePair>& pairs, const std::vector<double>& segment_lengths) {
  if (segment_lengths.empty()) throw Error(ErrorCode::InvalidArgument, "no segment lengths requested");
  for (double l : segment_lengths) {
    if (!(l > 0.0)) throw Error(ErrorCode::InvalidArgument, "segment lengths must be positive");
  }
  std::vector<double> dist(pairs.size(), 0.0);
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    dist[i] = dist[i - 1] + (pairs[i].gt.translation - pairs[i - 1].gt.translation).norm();
  }
  const double longest = *std::max_element(segment_lengths.begin(), segment_lengths.end());
  const double path = dist.empty() ? 0.0 : dist.back();
  if (path < longest) {
    throw Error(ErrorCode::TrajectoryTooShort, "ground-truth path of " + std::to_string(path) +
                                                   " m is shorter than the " + std::to_string(longest) +
                                                   " m segment");
  }

  RpeReport report;
  double t_sum = 0.0;
  double r_sum = 0.0;
  std::size_t total = 0;
  for (double length : segment_lengths) {
    SegmentStats stats;
    stats.length = length;
    std::size_t last = 0;
    for (std::size_t first = 0; first < pairs.size(); ++first) {
      last = std::max(last, first);
      while (last < pairs.size() && dist[last] - dist[first] <= length) ++last;
      if (last == pairs.size()) break;
      const RigidTransform gt_rel = pairs[first].gt.inverse() * pairs[last].gt;
      const RigidTransform est_rel = pairs[first].est.inverse() * pairs[last].est;
      const RigidTransform delta = gt_rel.inverse() * est_rel;
      const double te = delta.translation.norm() / length;
      const double re = rotation_angle(delta) * 180.0 / std::numbers::pi / length;
      stats.translation_percent += 100.0 * te;
      stats.rotation_deg_per_m += re;
      ++stats.count;
    }
    if (stats.count == 0) continue;
    t_sum += stats.translation_percent;
    r_sum += stats.rotation_deg_per_m;
    total += stats.count;
    stats.translation_percent /= static_cast<double>(stats.count);
    stats.rotation_deg_per_m /= static_cast<double>(stats.count);
    report.per_length.push_back(stats);
  }
  if (total == 0) throw Error(ErrorCode::TrajectoryTooShort, "no segment fits strictly inside the trajectory");
  report.translation_percent = t_sum / static_cast<double>(total);
  report.rotation_deg_per_m = r_sum / static_cast<double>(total);
  return report;
}

RpeReport rpe(const Trajectory& est, const Trajectory& gt, const std::vector<double>& segment_lengths,
              double max_dt) {
  return rpe(associate(est, gt, max_dt), segment_lengths);
}

double improvement(double vo_ate, double slam_ate) {
  if (!(vo_ate > 0.0)) throw Error(ErrorCode::ZeroBaseline, "odometry ATE must be positive");
  return 100.0 * (vo_ate - slam_ate) / vo_ate;
}

std::vector<MetricRow> metric_rows(const AteReport& report, const std::string& dataset, const std::string& method) {
  return {{dataset, method, "ate_rmse_m", report.rmse}, {dataset, method, "ate_median_m", report.median}};
}

std::vector<MetricRow> metric_rows(const RpeReport& report, const std::string& dataset, const std::string& method) {
  std::vector<MetricRow> rows = {{dataset, method, "rpe_translation_percent", report.translation_percent},
                                 {dataset, method, "rpe_rotation_deg_per_m", report.rotation_deg_per_m}};
  for (const SegmentStats& s : report.per_length) {
    const std::string suffix = "_" + std::to_string(static_cast<long>(std::lround(s.length))) + "m";
    rows.push_back({dataset, method, "rpe_translation_percent" + suffix, s.translation_percent});
    rows.push_back({dataset, method, "rpe_rotation_deg_per_m" + suffix, s.rotation_deg_per_m});
  }
  return rows;
}

}  // namespace semidirect
