#include "semidirect/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include <Eigen/Cholesky>

#include "semidirect/error.hpp"

namespace semidirect {

namespace {

constexpr int kMinDetectSide = 32;
// Keypoints keep this distance from the border so descriptors (11x11 Sobel
// samples) and sub-pixel fits stay inside the image.
constexpr int kBorderMargin = 8;
constexpr std::array<int, 4> kDescriptorGrid = {-5, -2, 2, 5};

class IntegralImage {
 public:
  explicit IntegralImage(const Image& img) : w_(img.width() + 1), sums_(static_cast<std::size_t>(w_) * (img.height() + 1), 0.0) {
    for (int y = 0; y < img.height(); ++y) {
      double row = 0.0;
      const float* src = img.row(y);
      for (int x = 0; x < img.width(); ++x) {
        row += src[x];
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  /// Sum over the inclusive rectangle [x0, x1] x [y0, y1].
  double box(int x0, int y0, int x1, int y1) const {
    return at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
  }

 private:
  double& at(int x, int y) { return sums_[static_cast<std::size_t>(y) * w_ + x]; }
  double at(int x, int y) const { return sums_[static_cast<std::size_t>(y) * w_ + x]; }

  int w_;
  std::vector<double> sums_;
};

struct FilterResponses {
  int width = 0;
  int height = 0;
  std::vector<float> blob;
  std::vector<float> corner;
  std::vector<float> du;
  std::vector<float> dv;
};

FilterResponses filter(const Image& img) {
  const int w = img.width();
  const int h = img.height();
  const IntegralImage ii(img);
  FilterResponses f;
  f.width = w;
  f.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  f.blob.assign(n, 0.0f);
  f.corner.assign(n, 0.0f);
  f.du.assign(n, 0.0f);
  f.dv.assign(n, 0.0f);
  for (int y = 2; y < h - 2; ++y) {
    for (int x = 2; x < w - 2; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      // 5x5 blob mask: outer ring -1, inner 3x3 ring +1, centre +8.
      f.blob[i] = static_cast<float>(-ii.box(x - 2, y - 2, x + 2, y + 2) + 2.0 * ii.box(x - 1, y - 1, x + 1, y + 1) +
                                     7.0 * img(x, y));
      // 5x5 checkerboard: -1 top-left and bottom-right 2x2, +1 the others.
      f.corner[i] = static_cast<float>(-ii.box(x - 2, y - 2, x - 1, y - 1) + ii.box(x + 1, y - 2, x + 2, y - 1) +
                                       ii.box(x - 2, y + 1, x - 1, y + 2) - ii.box(x + 1, y + 1, x + 2, y + 2));
    }
  }
  for (int y = 1; y < h - 1; ++y) {
    const float* a = img.row(y - 1);
    const float* b = img.row(y);
    const float* c = img.row(y + 1);
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      f.du[i] = (a[x + 1] + 2.0f * b[x + 1] + c[x + 1]) - (a[x - 1] + 2.0f * b[x - 1] + c[x - 1]);
      f.dv[i] = (c[x - 1] + 2.0f * c[x] + c[x + 1]) - (a[x - 1] + 2.0f * a[x] + a[x + 1]);
    }
  }
  return f;
}

// Strict extremum in the (2r+1)^2 window. Equal neighbours earlier in raster
// order win, so plateaus produce exactly one detection.
bool is_extremum(const std::vector<float>& resp, int w, int x, int y, int r, float sign) {
  const float c = sign * resp[static_cast<std::size_t>(y) * w + x];
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      if (sign * resp[static_cast<std::size_t>(y + dy) * w + x + dx] > c) return false;
    }
  }
  for (int dy = -r; dy <= r; ++dy) {
    const float* row = resp.data() + static_cast<std::size_t>(y + dy) * w;
    for (int dx = -r; dx <= r; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const float v = sign * row[x + dx];
      const bool earlier = dy < 0 || (dy == 0 && dx < 0);
      if (v > c || (earlier && v == c)) return false;
    }
  }
  return true;
}

double parabola_offset(float m, float c, float p) {
  const double denom = static_cast<double>(m) - 2.0 * c + p;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (static_cast<double>(m) - p) / denom, -0.5, 0.5);
}

Descriptor describe(const FilterResponses& f, int x, int y) {
  Descriptor d{};
  int k = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const std::size_t idx = static_cast<std::size_t>(y + kDescriptorGrid[i]) * f.width + x + kDescriptorGrid[j];
      d[static_cast<std::size_t>(k++)] = ((i + j) % 2 == 0) ? f.du[idx] : f.dv[idx];
    }
  }
  return d;
}

}  // namespace

std::vector<Keypoint> detect(const Image& img, const FeatureConfig& config) {
  if (img.width() < kMinDetectSide || img.height() < kMinDetectSide) {
    throw Error(ErrorCode::ImageTooSmall, "feature detection needs at least 32x32 pixels");
  }
  const FilterResponses f = filter(img);
  const int w = f.width;
  const int h = f.height;
  const int r = config.nms_radius;
  const int margin = std::max(kBorderMargin, r + 2);
  const float tau = config.response_threshold;

  std::vector<Keypoint> out;
  struct Channel {
    const std::vector<float>* resp;
    float sign;
    KeypointClass type;
  };
  const std::array<Channel, 4> channels = {{
      {&f.corner, -1.0f, KeypointClass::CornerMin},
      {&f.corner, 1.0f, KeypointClass::CornerMax},
      {&f.blob, -1.0f, KeypointClass::BlobMin},
      {&f.blob, 1.0f, KeypointClass::BlobMax},
  }};
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      for (const Channel& ch : channels) {
        const float v = ch.sign * (*ch.resp)[i];
        if (v < tau) continue;
        if (!is_extremum(*ch.resp, w, x, y, r, ch.sign)) continue;
        const auto& resp = *ch.resp;
        Keypoint kp;
        kp.u = {x + parabola_offset(resp[i - 1], resp[i], resp[i + 1]),
                y + parabola_offset(resp[i - static_cast<std::size_t>(w)], resp[i], resp[i + static_cast<std::size_t>(w)])};
        kp.type = ch.type;
        kp.response = resp[i];
        kp.descriptor = describe(f, x, y);
        out.push_back(kp);
      }
    }
  }
  return out;
}

namespace {

constexpr int kBinSize = 16;

/// Keypoints bucketed by class and position for windowed queries.
class KeypointIndex {
 public:
  KeypointIndex(const std::vector<Keypoint>& kps) : kps_(kps) {
    double max_u = 0.0;
    double max_v = 0.0;
    for (const auto& k : kps) {
      max_u = std::max(max_u, k.u.x());
      max_v = std::max(max_v, k.u.y());
    }
    cols_ = static_cast<int>(max_u) / kBinSize + 1;
    rows_ = static_cast<int>(max_v) / kBinSize + 1;
    bins_.resize(static_cast<std::size_t>(4 * cols_ * rows_));
    for (int i = 0; i < static_cast<int>(kps.size()); ++i) {
      bins_[bin(kps[static_cast<std::size_t>(i)].type, cell(kps[static_cast<std::size_t>(i)].u.x()),
                cell(kps[static_cast<std::size_t>(i)].u.y()))]
          .push_back(i);
    }
  }

  /// Minimum-SAD keypoint of the given class inside [u0,u1] x [v0,v1], or -1.
  int best_match(const Keypoint& query, double u0, double u1, double v0, double v1) const {
    if (kps_.empty()) return -1;
    const int c0 = std::max(0, cell(u0));
    const int c1 = std::min(cols_ - 1, cell(u1));
    const int r0 = std::max(0, cell(v0));
    const int r1 = std::min(rows_ - 1, cell(v1));
    int best = -1;
    float best_cost = std::numeric_limits<float>::infinity();
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        for (int idx : bins_[bin(query.type, c, r)]) {
          const Keypoint& k = kps_[static_cast<std::size_t>(idx)];
          if (k.u.x() < u0 || k.u.x() > u1 || k.u.y() < v0 || k.u.y() > v1) continue;
          float cost = 0.0f;
          for (int j = 0; j < kDescriptorLength; ++j) {
            cost += std::abs(k.descriptor[static_cast<std::size_t>(j)] - query.descriptor[static_cast<std::size_t>(j)]);
          }
          if (cost < best_cost) {
            best_cost = cost;
            best = idx;
          }
        }
      }
    }
    return best;
  }

  const Keypoint& operator[](int i) const { return kps_[static_cast<std::size_t>(i)]; }

 private:
  static int cell(double v) { return v < 0.0 ? -1 : static_cast<int>(v) / kBinSize; }
  std::size_t bin(KeypointClass type, int c, int r) const {
    return static_cast<std::size_t>((static_cast<int>(type) * rows_ + r) * cols_ + c);
  }

  const std::vector<Keypoint>& kps_;
  int cols_ = 1;
  int rows_ = 1;
  std::vector<std::vector<int>> bins_;
};

}  // namespace

std::vector<QuadMatch> match_circular(const StereoKeypoints& prev, const StereoKeypoints& cur,
                                      const FeatureConfig& config) {
  const KeypointIndex prev_left(prev.left);
  const KeypointIndex prev_right(prev.right);
  const KeypointIndex cur_left(cur.left);
  const KeypointIndex cur_right(cur.right);
  const double hw = config.search_half_width;
  const double hh = config.search_half_height;
  const double band = config.epipolar_band;
  const double max_disp = config.max_disparity;

  auto temporal = [&](const KeypointIndex& target, const Keypoint& q) {
    return target.best_match(q, q.u.x() - hw, q.u.x() + hw, q.u.y() - hh, q.u.y() + hh);
  };
  // Left -> right: the partner lies at smaller u on (nearly) the same row.
  auto left_to_right = [&](const KeypointIndex& target, const Keypoint& q) {
    return target.best_match(q, q.u.x() - max_disp, q.u.x(), q.u.y() - band, q.u.y() + band);
  };
  auto right_to_left = [&](const KeypointIndex& target, const Keypoint& q) {
    return target.best_match(q, q.u.x(), q.u.x() + max_disp, q.u.y() - band, q.u.y() + band);
  };

  std::vector<int> prev_lr_cache(prev.left.size(), -2);
  std::vector<QuadMatch> out;
  for (int start = 0; start < static_cast<int>(cur.left.size()); ++start) {
    const Keypoint& f = cur.left[static_cast<std::size_t>(start)];
    const int pl = temporal(prev_left, f);
    if (pl < 0) continue;
    int& pr = prev_lr_cache[static_cast<std::size_t>(pl)];
    if (pr == -2) pr = left_to_right(prev_right, prev_left[pl]);
    if (pr < 0) continue;
    const int cr = temporal(cur_right, prev_right[pr]);
    if (cr < 0) continue;
    const int back = right_to_left(cur_left, cur_right[cr]);
    if (back != start) continue;
    QuadMatch q;
    q.prev_left = pl;
    q.prev_right = pr;
    q.cur_right = cr;
    q.cur_left = start;
    q.u_prev_left = prev_left[pl].u;
    q.u_prev_right = prev_right[pr].u;
    q.u_cur_right = cur_right[cr].u;
    q.u_cur_left = f.u;
    out.push_back(q);
  }
  return out;
}

namespace {

constexpr int kRefineIterations = 10;
constexpr double kRefineMaxShift = 1.5;  // [px] from the detected position

/// Translation-only inverse-compositional alignment of the anchor patch into
/// `target`, starting at `start`.
std::optional<Vector2d> align_patch(const Image& anchor, const Vector2d& a, const Image& target, const Vector2d& start,
                                    int r) {
  const int n = (2 * r + 1) * (2 * r + 1);
  std::vector<double> tmpl(static_cast<std::size_t>(n));
  std::vector<Vector2d> grad(static_cast<std::size_t>(n));
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  int i = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx, ++i) {
      const Vector2d p = a + Vector2d(dx, dy);
      const auto c = sample_bilinear(anchor, p);
      const auto l = sample_bilinear(anchor, p - Vector2d(1, 0));
      const auto rt = sample_bilinear(anchor, p + Vector2d(1, 0));
      const auto up = sample_bilinear(anchor, p - Vector2d(0, 1));
      const auto dn = sample_bilinear(anchor, p + Vector2d(0, 1));
      if (!c || !l || !rt || !up || !dn) return std::nullopt;
      tmpl[static_cast<std::size_t>(i)] = *c;
      grad[static_cast<std::size_t>(i)] = {0.5 * (*rt - *l), 0.5 * (*dn - *up)};
      h += grad[static_cast<std::size_t>(i)] * grad[static_cast<std::size_t>(i)].transpose();
    }
  }
  if (h.determinant() < 1e-12) return std::nullopt;
  const Eigen::Matrix2d h_inv = h.inverse();
  Vector2d u = start;
  for (int it = 0; it < kRefineIterations; ++it) {
    Vector2d g = Vector2d::Zero();
    i = 0;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx, ++i) {
        const auto v = sample_bilinear(target, u + Vector2d(dx, dy));
        if (!v) return std::nullopt;
        g += grad[static_cast<std::size_t>(i)] * (*v - tmpl[static_cast<std::size_t>(i)]);
      }
    }
    const Vector2d step = h_inv * g;
    u -= step;
    if ((u - start).norm() > kRefineMaxShift) return std::nullopt;
    if (step.norm() < 1e-4) break;
  }
  return u;
}

}  // namespace

void refine_matches(const StereoFrame& prev, const StereoFrame& cur, std::vector<QuadMatch>& matches,
                    const FeatureConfig& config) {
  const int r = config.refine_half_window;
  for (QuadMatch& m : matches) {
    const Vector2d a = m.u_prev_left;
    if (auto u = align_patch(prev.left, a, prev.right, m.u_prev_right, r)) m.u_prev_right = *u;
    if (auto u = align_patch(prev.left, a, cur.right, m.u_cur_right, r)) m.u_cur_right = *u;
    if (auto u = align_patch(prev.left, a, cur.left, m.u_cur_left, r)) m.u_cur_left = *u;
  }
}

namespace {

struct StereoObservation {
  Vector3d point;     // triangulated in the previous left camera
  Vector2d left;      // observed in the current left image
  Vector2d right;     // observed in the current right image
};

/// Left and right reprojection errors [px]; infinite when behind the camera.
std::pair<double, double> reprojection_errors(const StereoObservation& o, const RigidTransform& t,
                                              const CameraIntrinsics& k, double baseline) {
  const Vector3d p = t * o.point;
  if (p.z() <= kMinProjectableDepth) {
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  const Vector2d l(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  // Rectified rows coincide, so the right camera constrains only the column.
  const double r = k.fx * (p.x() - baseline) / p.z() + k.cx;
  return {(l - o.left).norm(), std::abs(r - o.right.x())};
}

RigidTransform gauss_newton(const std::vector<StereoObservation>& obs, const std::vector<int>& subset,
                            RigidTransform t, const CameraIntrinsics& k, double baseline, int iterations) {
  for (int it = 0; it < iterations; ++it) {
    Matrix6d h = Matrix6d::Zero();
    Vector6d g = Vector6d::Zero();
    for (int idx : subset) {
      const StereoObservation& o = obs[static_cast<std::size_t>(idx)];
      const Vector3d p = t * o.point;
      if (p.z() <= kMinProjectableDepth) continue;
      const double iz = 1.0 / p.z();
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>().setIdentity();
      dp.rightCols<3>() = -hat(p);
      for (int cam = 0; cam < 2; ++cam) {
        const double px = cam == 0 ? p.x() : p.x() - baseline;
        const Vector2d obs_uv = cam == 0 ? o.left : o.right;
        const Vector2d pred(k.fx * px * iz + k.cx, k.fy * p.y() * iz + k.cy);
        Eigen::Matrix<double, 2, 3> dpi;
        dpi << k.fx * iz, 0.0, -k.fx * px * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
        const Eigen::Matrix<double, 2, 6> j = dpi * dp;
        const Vector2d r = pred - obs_uv;
        if (cam == 0) {
          h.noalias() += j.transpose() * j;
          g.noalias() += j.transpose() * r;
        } else {
          h.noalias() += j.row(0).transpose() * j.row(0);
          g.noalias() += j.row(0).transpose() * r.x();
        }
      }
    }
    h.diagonal().array() += 1e-9;
    const Vector6d delta = -h.ldlt().solve(g);
    if (!delta.allFinite()) break;
    t = exp_map(Twist(delta)) * t;
    if (delta.norm() < 1e-10) break;
  }
  return t;
}

std::vector<int> collect_inliers(const std::vector<StereoObservation>& obs, const RigidTransform& t,
                                 const CameraIntrinsics& k, double baseline, double threshold, double* mean_error) {
  std::vector<int> inliers;
  double sum = 0.0;
  for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
    const auto [el, er] = reprojection_errors(obs[static_cast<std::size_t>(i)], t, k, baseline);
    if (el <= threshold && er <= threshold) {
      inliers.push_back(i);
      sum += 0.5 * (el + er);
    }
  }
  if (mean_error) *mean_error = inliers.empty() ? 0.0 : sum / static_cast<double>(inliers.size());
  return inliers;
}

}  // namespace

FeatureMotion estimate_motion(const std::vector<QuadMatch>& matches, const StereoRig& rig,
                              const FeatureConfig& config, std::uint64_t seed) {
  const CameraIntrinsics& k = rig.intrinsics;
  std::vector<StereoObservation> obs;
  std::vector<int> match_of_obs;
  obs.reserve(matches.size());
  for (int i = 0; i < static_cast<int>(matches.size()); ++i) {
    const QuadMatch& m = matches[static_cast<std::size_t>(i)];
    const double disparity = m.u_prev_left.x() - m.u_prev_right.x();
    if (disparity < config.min_disparity) continue;
    const double d = disparity / (k.fx * rig.baseline);
    obs.push_back({unproject(m.u_prev_left, d, k), m.u_cur_left, m.u_cur_right});
    match_of_obs.push_back(i);
  }
  const int n = static_cast<int>(obs.size());
  if (n < std::max(6, 3)) {
    throw Error(ErrorCode::InsufficientMatches, std::to_string(n) + " usable matches");
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  RigidTransform best;
  std::size_t best_count = 0;
  double best_error = std::numeric_limits<double>::infinity();
  std::vector<int> sample(3);
  for (int it = 0; it < config.ransac_iterations; ++it) {
    sample[0] = pick(rng);
    do { sample[1] = pick(rng); } while (sample[1] == sample[0]);
    do { sample[2] = pick(rng); } while (sample[2] == sample[0] || sample[2] == sample[1]);
    const RigidTransform t =
        gauss_newton(obs, sample, RigidTransform::identity(), k, rig.baseline, config.gauss_newton_iterations);
    if (!t.rotation.allFinite() || !t.translation.allFinite()) continue;
    double err = 0.0;
    const auto inliers = collect_inliers(obs, t, k, rig.baseline, config.inlier_threshold, &err);
    if (inliers.size() > best_count || (inliers.size() == best_count && err < best_error)) {
      best_count = inliers.size();
      best_error = err;
      best = t;
    }
  }
  if (static_cast<int>(best_count) < config.min_inliers) {
    throw Error(ErrorCode::DegenerateGeometry,
                "RANSAC best consensus " + std::to_string(best_count) + " < " + std::to_string(config.min_inliers));
  }

  FeatureMotion result;
  double err = 0.0;
  std::vector<int> inliers = collect_inliers(obs, best, k, rig.baseline, config.inlier_threshold, &err);
  RigidTransform refined = best;
  for (int round = 0; round < 2; ++round) {
    refined = gauss_newton(obs, inliers, refined, k, rig.baseline, config.gauss_newton_iterations);
    auto next = collect_inliers(obs, refined, k, rig.baseline, config.inlier_threshold, &err);
    if (static_cast<int>(next.size()) < config.min_inliers) break;
    inliers = std::move(next);
  }
  result.motion = refined;
  result.mean_reprojection_error = err;
  result.inliers.reserve(inliers.size());
  for (int i : inliers) result.inliers.push_back(match_of_obs[static_cast<std::size_t>(i)]);
  result.reliable = static_cast<int>(result.inliers.size()) >= std::max(6, config.min_inliers) &&
                    5 * result.inliers.size() >= matches.size();
  return result;
}

}  // namespace semidirect
