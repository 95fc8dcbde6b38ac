#include "semidirect/frame.hpp"

#include <algorithm>

#include "semidirect/error.hpp"

namespace semidirect {

DepthMap::DepthMap(int width, int height)
    : width_(width),
      height_(height),
      idepth_(static_cast<std::size_t>(width) * height, 0.0),
      var_(static_cast<std::size_t>(width) * height, 0.0),
      mask_(static_cast<std::size_t>(width) * height, 0) {}

void DepthMap::set(int x, int y, double d, double var) {
  if (!(d > 0.0) || !(var > 0.0) || !std::isfinite(d) || !std::isfinite(var)) {
    throw Error(ErrorCode::InvalidArgument, "depth hypothesis needs d > 0 and var > 0");
  }
  const std::size_t i = index(x, y);
  idepth_[i] = d;
  var_[i] = var;
  mask_[i] = 1;
}

void DepthMap::clear(int x, int y) {
  const std::size_t i = index(x, y);
  idepth_[i] = 0.0;
  var_[i] = 0.0;
  mask_[i] = 0;
}

std::size_t DepthMap::count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

std::optional<double> DepthMap::median_idepth() const {
  std::vector<double> values;
  values.reserve(count());
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i]) values.push_back(idepth_[i]);
  }
  if (values.empty()) return std::nullopt;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

DepthMap DepthMap::downsample() const {
  DepthMap out(width_ / 2, height_ / 2);
  for (int y = 0; y < out.height_; ++y) {
    for (int x = 0; x < out.width_; ++x) {
      double sum_d = 0.0;
      double sum_var = 0.0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t i = index(2 * x + dx, 2 * y + dy);
          if (!mask_[i]) continue;
          sum_d += idepth_[i];
          sum_var += var_[i];
          ++n;
        }
      }
      if (n > 0) out.set(x, y, sum_d / n, sum_var / n);
    }
  }
  return out;
}

std::optional<DepthMap::Sample> DepthMap::sample_bilinear(const Vector2d& u) const {
  const double x = u.x();
  const double y = u.y();
  if (!(x >= 0.0 && y >= 0.0 && x <= width_ - 1 && y <= height_ - 1) || width_ < 2 || height_ < 2) {
    return std::nullopt;
  }
  const int x0 = std::min(static_cast<int>(x), width_ - 2);
  const int y0 = std::min(static_cast<int>(y), height_ - 2);
  const std::size_t i00 = index(x0, y0);
  const std::size_t i10 = i00 + 1;
  const std::size_t i01 = i00 + static_cast<std::size_t>(width_);
  const std::size_t i11 = i01 + 1;
  if (!(mask_[i00] && mask_[i10] && mask_[i01] && mask_[i11])) return std::nullopt;
  const double a = x - x0;
  const double b = y - y0;
  const double d00 = idepth_[i00], d10 = idepth_[i10], d01 = idepth_[i01], d11 = idepth_[i11];
  Sample s;
  s.d = (1.0 - b) * ((1.0 - a) * d00 + a * d10) + b * ((1.0 - a) * d01 + a * d11);
  s.var = (1.0 - b) * ((1.0 - a) * var_[i00] + a * var_[i10]) + b * ((1.0 - a) * var_[i01] + a * var_[i11]);
  s.dd_du = (1.0 - b) * (d10 - d00) + b * (d11 - d01);
  s.dd_dv = (1.0 - a) * (d01 - d00) + a * (d11 - d10);
  return s;
}

std::shared_ptr<const KeyFrame> KeyFrame::create(KeyframeId id, double timestamp, Image left, Image right,
                                                 const StereoRig& rig, DepthMap depth, const RigidTransform& pose,
                                                 int pyramid_levels) {
  if (left.width() != right.width() || left.height() != right.height()) {
    throw Error(ErrorCode::DimensionMismatch, "keyframe stereo images differ in size");
  }
  if (depth.width() != left.width() || depth.height() != left.height()) {
    throw Error(ErrorCode::DimensionMismatch, "keyframe depth map does not match images");
  }
  auto kf = std::make_shared<KeyFrame>();
  kf->id = id;
  kf->timestamp = timestamp;
  kf->rig = rig;
  kf->pose = pose;
  kf->pyramid = build_pyramid(left, pyramid_levels);
  kf->depth_pyramid.reserve(static_cast<std::size_t>(pyramid_levels));
  kf->depth_pyramid.push_back(depth);
  for (int i = 1; i < pyramid_levels; ++i) kf->depth_pyramid.push_back(kf->depth_pyramid.back().downsample());
  kf->left = std::move(left);
  kf->right = std::move(right);
  kf->depth = std::move(depth);
  return kf;
}

int default_pyramid_levels(int width, int height) {
  int levels = width > 640 ? 4 : 3;
  while (levels > 1 && ((width >> (levels - 1)) < kMinPyramidSide || (height >> (levels - 1)) < kMinPyramidSide)) {
    --levels;
  }
  return levels;
}

}  // namespace semidirect
