#include "semidirect/stereo_depth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semidirect/error.hpp"

namespace semidirect {

DepthMap block_match(const Image& left, const Image& right, const StereoRig& rig, const BlockMatchConfig& config) {
  if (left.width() != right.width() || left.height() != right.height()) {
    throw Error(ErrorCode::DimensionMismatch, "stereo pair differs in size");
  }
  if (config.window < 1 || config.window % 2 == 0) throw Error(ErrorCode::InvalidArgument, "window must be odd");
  if (config.min_disparity < 0 || config.max_disparity < config.min_disparity) {
    throw Error(ErrorCode::InvalidArgument, "bad disparity range");
  }

  const int w = left.width();
  const int h = left.height();
  const int r = config.window / 2;
  DepthMap out(w, h);
  if (w < config.window || h < config.window || w < 3 || h < 3) return out;

  const GradientImage grad = gradient(left);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  constexpr float kInf = std::numeric_limits<float>::infinity();
  std::vector<float> best_cost(n, kInf), cost_minus(n, kInf), cost_plus(n, kInf), prev_cost(n, kInf);
  std::vector<int> best_d(n, -1);
  std::vector<float> right_best_cost(n, kInf);
  std::vector<int> right_best_d(n, -1);

  std::vector<float> col(static_cast<std::size_t>(w));
  const int dmax = std::min(config.max_disparity, w - 2 * r - 1);

  for (int d = config.min_disparity; d <= dmax; ++d) {
    const int x_begin = r + d;  // right window must stay inside the image
    const int x_end = w - r;    // exclusive
    if (x_begin >= x_end) break;

    auto ad_row = [&](int y, float sign) {
      const float* lrow = left.row(y);
      const float* rrow = right.row(y);
      for (int x = d; x < w; ++x) col[static_cast<std::size_t>(x)] += sign * std::abs(lrow[x] - rrow[x - d]);
    };

    std::fill(col.begin(), col.end(), 0.0f);
    for (int y = 0; y < 2 * r + 1; ++y) ad_row(y, 1.0f);

    for (int y = r; y < h - r; ++y) {
      float window_sum = 0.0f;
      for (int x = x_begin - r; x <= x_begin + r; ++x) window_sum += col[static_cast<std::size_t>(x)];
      for (int x = x_begin; x < x_end; ++x) {
        if (x > x_begin) {
          window_sum += col[static_cast<std::size_t>(x + r)] - col[static_cast<std::size_t>(x - r - 1)];
        }
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const float cost = window_sum;
        if (cost < best_cost[i]) {
          best_cost[i] = cost;
          best_d[i] = d;
          cost_minus[i] = d > config.min_disparity ? prev_cost[i] : kInf;
          cost_plus[i] = kInf;
        } else if (best_d[i] == d - 1) {
          cost_plus[i] = cost;
        }
        prev_cost[i] = cost;
        const std::size_t ir = i - static_cast<std::size_t>(d);
        if (cost < right_best_cost[ir]) {
          right_best_cost[ir] = cost;
          right_best_d[ir] = d;
        }
      }
      if (y + r + 1 < h) {
        ad_row(y + r + 1, 1.0f);
        ad_row(y - r, -1.0f);
      }
    }
  }

  const float g_min = static_cast<float>(config.gradient_threshold);
  for (int y = r; y < h - r; ++y) {
    for (int x = r + config.min_disparity; x < w - r; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int bd = best_d[i];
      if (bd <= config.min_disparity || bd >= dmax || bd <= 0) continue;
      if (grad.magnitude(x, y) < g_min) continue;
      const float c0 = best_cost[i];
      const float cm = cost_minus[i];
      const float cp = cost_plus[i];
      if (!std::isfinite(cm) || !std::isfinite(cp)) continue;
      const double denom = static_cast<double>(cm) - 2.0 * c0 + cp;
      double offset = 0.0;
      if (denom > 0.0) offset = std::clamp(0.5 * (static_cast<double>(cm) - cp) / denom, -0.5, 0.5);
      const std::size_t ir = i - static_cast<std::size_t>(bd);
      if (std::abs(right_best_d[ir] - bd) > config.lr_tolerance) continue;
      const double disparity = bd + offset;
      if (!(disparity > 0.0)) continue;
      const InverseDepth hyp = disparity_to_inverse_depth(disparity, rig, config.disparity_sigma);
      out.set(x, y, hyp.d, hyp.var);
    }
  }
  return out;
}

DepthMap propagate(const DepthMap& source, const CameraIntrinsics& source_k, const RigidTransform& relative,
                   const CameraIntrinsics& target_k) {
  DepthMap out(target_k.width, target_k.height);
  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      const auto hyp = source.at(x, y);
      if (!hyp) continue;
      const Vector3d p = unproject({x, y}, hyp->d, source_k);
      const Vector3d q = relative * p;
      if (!(q.z() > kMinProjectableDepth)) continue;
      const Vector2d u = project(q, target_k);
      const int tx = static_cast<int>(std::lround(u.x()));
      const int ty = static_cast<int>(std::lround(u.y()));
      if (tx < 0 || ty < 0 || tx >= target_k.width || ty >= target_k.height) continue;
      const double d_new = 1.0 / q.z();
      const double ratio_sq = (d_new / hyp->d) * (d_new / hyp->d);
      const double var_new = hyp->var * ratio_sq * ratio_sq;
      if (out.valid(tx, ty) && out.var(tx, ty) <= var_new) continue;
      out.set(tx, ty, d_new, var_new);
    }
  }
  return out;
}

DepthMap propagate(const KeyFrame& source, const RigidTransform& relative, const CameraIntrinsics& target_k) {
  return propagate(source.depth, source.rig.intrinsics, relative, target_k);
}

DepthMap fuse(const DepthMap& stereo, const DepthMap& propagated, const FuseConfig& config) {
  if (stereo.width() != propagated.width() || stereo.height() != propagated.height()) {
    throw Error(ErrorCode::DimensionMismatch, "fuse: depth maps differ in size");
  }
  DepthMap out(stereo.width(), stereo.height());
  for (int y = 0; y < stereo.height(); ++y) {
    for (int x = 0; x < stereo.width(); ++x) {
      const auto s = stereo.at(x, y);
      const auto p = propagated.at(x, y);
      if (!s && !p) continue;
      if (!p) {
        out.set(x, y, s->d, s->var);
        continue;
      }
      if (!s) {
        out.set(x, y, p->d, p->var);
        continue;
      }
      const double var_sum = s->var + p->var;
      if (std::abs(s->d - p->d) > config.compatibility_sigmas * std::sqrt(var_sum)) {
        const InverseDepth& keep = s->var <= p->var ? *s : *p;
        out.set(x, y, keep.d, keep.var);
        continue;
      }
      const double omega = s->var / var_sum;
      out.set(x, y, (1.0 - omega) * s->d + omega * p->d, s->var * p->var / var_sum);
    }
  }
  return out;
}

DepthMap inflate_radial_variance(const DepthMap& map, const CameraIntrinsics& k, double alpha) {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
  DepthMap out = map;
  if (alpha == 0.0) return out;
  double r_max_sq = 0.0;
  for (double cx : {0.0, static_cast<double>(k.width - 1)}) {
    for (double cy : {0.0, static_cast<double>(k.height - 1)}) {
      r_max_sq = std::max(r_max_sq, (cx - k.cx) * (cx - k.cx) + (cy - k.cy) * (cy - k.cy));
    }
  }
  if (r_max_sq <= 0.0) return out;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const auto hyp = map.at(x, y);
      if (!hyp) continue;
      const double r_sq = (x - k.cx) * (x - k.cx) + (y - k.cy) * (y - k.cy);
      out.set(x, y, hyp->d, hyp->var * (1.0 + alpha * r_sq / r_max_sq));
    }
  }
  return out;
}

DepthMap restrict_to_gradient(const DepthMap& map, const Image& image, double gradient_threshold) {
  if (map.width() != image.width() || map.height() != image.height()) {
    throw Error(ErrorCode::DimensionMismatch, "restrict_to_gradient: size mismatch");
  }
  DepthMap out = map;
  const GradientImage g = gradient(image);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (out.valid(x, y) && g.magnitude(x, y) < gradient_threshold) out.clear(x, y);
    }
  }
  return out;
}

}  // namespace semidirect
