#include "semidirect/direct_alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>

#include <Eigen/Cholesky>

#include "semidirect/error.hpp"

namespace semidirect {

namespace {

double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

double huber_cost(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

struct Evaluation {
  ResidualSet set;
  std::vector<Vector6d> jac;

  double mean_cost() const {
    double sum = 0.0;
    for (const auto& r : set.rows) sum += r.cost;
    return set.rows.empty() ? 0.0 : sum / static_cast<double>(set.rows.size());
  }

  double photometric_rms() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : set.rows) {
      if (r.kind != ResidualKind::Photometric) continue;
      sum += huber_weight(r.value, huber_photo) * r.value * r.value;
      ++n;
    }
    return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
  }

  double huber_photo = 0.0;
};

Evaluation evaluate(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& t, int level,
                    const ResidualWeights& w, const AlignmentConfig& config, bool with_jacobian) {
  if (level < 0 || level >= kf.pyramid.size() || level >= target.images.size() ||
      level >= static_cast<int>(target.depths.size())) {
    throw Error(ErrorCode::InvalidArgument, "pyramid level " + std::to_string(level) + " not available");
  }
  const Image& kf_img = kf.pyramid.level(level);
  const DepthMap& kf_depth = kf.depth_pyramid[static_cast<std::size_t>(level)];
  const Image& img = target.images.level(level);
  const DepthMap& depth = target.depths[static_cast<std::size_t>(level)];
  const CameraIntrinsics k = kf.rig.intrinsics.at_level(level);

  Evaluation ev;
  ev.huber_photo = w.huber_photo;
  const double inv_photo_var = 1.0 / w.photometric_variance;
  for (int y = 0; y < kf_depth.height(); ++y) {
    for (int x = 0; x < kf_depth.width(); ++x) {
      if (!kf_depth.valid(x, y)) continue;
      ++ev.set.hypotheses;
      const double d = kf_depth.idepth(x, y);
      const Vector3d q = t * unproject({x, y}, d, k);
      if (!(q.z() > kMinProjectableDepth)) continue;
      const double iz = 1.0 / q.z();
      const Vector2d u(k.fx * q.x() * iz + k.cx, k.fy * q.y() * iz + k.cy);
      const auto s = sample_bilinear_with_gradient(img, u);
      if (!s) continue;
      ++ev.set.valid_pixels;
      const int pixel = static_cast<int>(kf_depth.index(x, y));

      Eigen::Matrix<double, 2, 6> dpi_dxi;
      if (with_jacobian) {
        Eigen::Matrix<double, 2, 3> dpi;
        dpi << k.fx * iz, 0.0, -k.fx * q.x() * iz * iz, 0.0, k.fy * iz, -k.fy * q.y() * iz * iz;
        Eigen::Matrix<double, 3, 6> dq;
        dq.leftCols<3>().setIdentity();
        dq.rightCols<3>() = -hat(q);
        dpi_dxi = dpi * dq;
      }

      const double rp = kf_img(x, y) - s->value;
      ev.set.rows.push_back({pixel, ResidualKind::Photometric, rp, huber_weight(rp, w.huber_photo) * inv_photo_var,
                             huber_cost(rp, w.huber_photo) * inv_photo_var});
      if (with_jacobian) ev.jac.push_back(-(s->du * dpi_dxi.row(0) + s->dv * dpi_dxi.row(1)).transpose());

      if (!config.use_depth) continue;
      const auto ds = depth.sample_bilinear(u);
      if (!ds) continue;
      const double rd = iz - ds->d;
      const double ratio_sq = (iz / d) * (iz / d);
      const double var = kf_depth.var(x, y) * ratio_sq * ratio_sq + ds->var;
      ev.set.rows.push_back({pixel, ResidualKind::Depth, rd, huber_weight(rd, w.huber_depth) / var,
                             huber_cost(rd, w.huber_depth) / var});
      if (with_jacobian) {
        // d(1/z)/dq = (0, 0, -1/z^2); dq/dxi row 2 = (0, 0, 1, q_y, -q_x, 0).
        Vector6d dz;
        dz << 0.0, 0.0, 1.0, q.y(), -q.x(), 0.0;
        const Vector6d j = -iz * iz * dz - (ds->dd_du * dpi_dxi.row(0) + ds->dd_dv * dpi_dxi.row(1)).transpose();
        ev.jac.push_back(j);
      }
    }
  }
  if (ev.set.valid_pixels == 0) {
    throw Error(ErrorCode::EmptyOverlap, "no keyframe pixel warps into the frame at level " + std::to_string(level));
  }
  return ev;
}

/// Mean cost of `a` and of `b` over the rows present in both. The step is
/// modelled on the current rows only, so rows entering or leaving the overlap
/// must not decide whether it is accepted.
std::pair<double, double> shared_mean_costs(const ResidualSet& a, const ResidualSet& b) {
  auto key = [](const ResidualRow& r) { return 2 * static_cast<long long>(r.pixel) + static_cast<int>(r.kind); };
  double sa = 0.0;
  double sb = 0.0;
  std::size_t n = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.rows.size() && j < b.rows.size()) {
    const long long ka = key(a.rows[i]);
    const long long kb = key(b.rows[j]);
    if (ka < kb) {
      ++i;
    } else if (kb < ka) {
      ++j;
    } else {
      sa += a.rows[i++].cost;
      sb += b.rows[j++].cost;
      ++n;
    }
  }
  if (n == 0) return {0.0, std::numeric_limits<double>::infinity()};
  return {sa / static_cast<double>(n), sb / static_cast<double>(n)};
}

}  // namespace

ResidualWeights ResidualWeights::from(const KeyFrame& kf, const AlignmentConfig& config) {
  ResidualWeights w;
  w.huber_photo = config.huber_photo;
  w.huber_depth = config.huber_depth_scale * kf.depth.median_idepth().value_or(1.0);
  w.photometric_variance = config.photometric_sigma * config.photometric_sigma;
  return w;
}

AlignmentTarget AlignmentTarget::make(const Image& left, const DepthMap& depth, int levels) {
  if (depth.width() != left.width() || depth.height() != left.height()) {
    throw Error(ErrorCode::DimensionMismatch, "frame depth does not match frame image");
  }
  AlignmentTarget t;
  t.images = build_pyramid(left, levels);
  t.depths.reserve(static_cast<std::size_t>(levels));
  t.depths.push_back(depth);
  for (int i = 1; i < levels; ++i) t.depths.push_back(t.depths.back().downsample());
  return t;
}

ResidualSet residuals(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& motion, int level,
                      const AlignmentConfig& config) {
  return evaluate(kf, target, motion, level, ResidualWeights::from(kf, config), config, false).set;
}

ResidualSet residuals(const KeyFrame& kf, const StereoFrame& frame, const DepthMap& frame_depth, const Twist& xi,
                      int level, const AlignmentConfig& config) {
  return residuals(kf, AlignmentTarget::make(frame.left, frame_depth, kf.pyramid.size()), exp_map(xi), level, config);
}

std::vector<Vector6d> jacobian(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& motion,
                               int level, const AlignmentConfig& config) {
  return evaluate(kf, target, motion, level, ResidualWeights::from(kf, config), config, true).jac;
}

std::vector<Vector6d> jacobian(const KeyFrame& kf, const StereoFrame& frame, const DepthMap& frame_depth,
                               const Twist& xi, int level, const AlignmentConfig& config) {
  return jacobian(kf, AlignmentTarget::make(frame.left, frame_depth, kf.pyramid.size()), exp_map(xi), level, config);
}

AlignmentResult align(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& init,
                      const AlignmentConfig& config) {
  if (!init.rotation.allFinite() || !init.translation.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "non-finite initial motion");
  }
  if (kf.depth.count() == 0) throw Error(ErrorCode::EmptyOverlap, "keyframe has no depth hypotheses");
  int levels = std::min(kf.pyramid.size(), target.images.size());
  if (config.levels > 0) levels = std::min(levels, config.levels);
  const ResidualWeights weights = ResidualWeights::from(kf, config);

  AlignmentResult result;
  result.iterations.assign(static_cast<std::size_t>(levels), 0);
  std::optional<Evaluation> initial;
  try {
    initial = evaluate(kf, target, init, 0, weights, config, false);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyOverlap) throw;
  }

  RigidTransform t = init;
  Evaluation cur;
  for (int level = levels - 1; level >= 0; --level) {
    cur = evaluate(kf, target, t, level, weights, config, true);
    double cost = cur.mean_cost();
    double lambda = 0.0;
    int rejections = 0;
    for (int it = 0; it < config.max_iterations; ++it) {
      ++result.iterations[static_cast<std::size_t>(level)];
      Matrix6d h = Matrix6d::Zero();
      Vector6d g = Vector6d::Zero();
      for (std::size_t i = 0; i < cur.set.rows.size(); ++i) {
        const ResidualRow& row = cur.set.rows[i];
        const Vector6d& j = cur.jac[i];
        h.noalias() += row.weight * j * j.transpose();
        g.noalias() += row.weight * row.value * j;
      }
      Matrix6d damped = h;
      damped.diagonal() *= 1.0 + lambda;
      damped.diagonal().array() += 1e-12;
      const Vector6d delta = -damped.ldlt().solve(g);
      if (!delta.allFinite() || delta.norm() < config.step_tolerance) break;

      const RigidTransform candidate = exp_map(Twist(delta)) * t;
      Evaluation next;
      double before = cost;
      double after = std::numeric_limits<double>::infinity();
      try {
        next = evaluate(kf, target, candidate, level, weights, config, true);
        std::tie(before, after) = shared_mean_costs(cur.set, next.set);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyOverlap) throw;
      }

      if (after <= before) {
        const double rel = before > 0.0 ? (before - after) / before : 0.0;
        t = candidate;
        cur = std::move(next);
        cost = cur.mean_cost();
        rejections = 0;
        lambda = lambda < 1e-6 ? 0.0 : 0.1 * lambda;
        if (rel < config.relative_decrease_tolerance) break;
        continue;
      }
      // Bilinear interpolation leaves the cost slightly rough at sub-pixel
      // scale; a rise this small means the level sits at its optimum.
      if (std::isfinite(after) && (after - before) <= config.stall_tolerance * before) break;
      if (++rejections >= config.max_rejections) {
        throw Error(ErrorCode::DivergedAlignment,
                    std::to_string(rejections) + " consecutive cost increases at level " + std::to_string(level));
      }
      lambda = lambda == 0.0 ? 1.0 : 10.0 * lambda;
    }
  }

  result.motion = t;
  if (initial) {
    std::tie(result.initial_cost, result.cost) = shared_mean_costs(initial->set, cur.set);
  } else {
    result.initial_cost = std::numeric_limits<double>::infinity();
    result.cost = cur.mean_cost();
  }
  result.valid_ratio = cur.set.valid_ratio();
  result.photometric_rms = cur.photometric_rms();
  result.converged = result.valid_ratio >= config.min_valid_ratio && result.photometric_rms < config.tau_track &&
                     result.cost <= result.initial_cost;
  return result;
}

AlignmentResult align(const KeyFrame& kf, const StereoFrame& frame, const DepthMap& frame_depth, const Twist& init,
                      const AlignmentConfig& config) {
  if (!init.is_finite()) throw Error(ErrorCode::InvalidArgument, "non-finite initial twist");
  return align(kf, AlignmentTarget::make(frame.left, frame_depth, kf.pyramid.size()), exp_map(init), config);
}

}  // namespace semidirect
