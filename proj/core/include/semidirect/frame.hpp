#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "semidirect/geometry.hpp"
#include "semidirect/imaging.hpp"

namespace semidirect {

/// Timestamped rectified stereo pair.
struct StereoFrame {
  double timestamp = 0.0;  ///< [s]
  Image left;
  Image right;
  StereoRig rig;
};

/// Semi-dense inverse-depth map with per-pixel variance. A pixel belongs to
/// the domain when it carries a hypothesis with d > 0 and var > 0.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool valid(int x, int y) const { return mask_[index(x, y)] != 0; }
  double idepth(int x, int y) const { return idepth_[index(x, y)]; }
  double var(int x, int y) const { return var_[index(x, y)]; }
  std::optional<InverseDepth> at(int x, int y) const {
    const std::size_t i = index(x, y);
    if (!mask_[i]) return std::nullopt;
    return InverseDepth{idepth_[i], var_[i]};
  }

  /// Stores a hypothesis; non-positive d or var are rejected with InvalidArgument.
  void set(int x, int y, double d, double var);
  void clear(int x, int y);

  std::size_t count() const;
  std::optional<double> median_idepth() const;

  /// 2x2 reduction: mean inverse depth and mean variance of the valid children.
  DepthMap downsample() const;

  /// Bilinear inverse depth and variance; empty unless all four neighbours are valid.
  struct Sample {
    double d, var, dd_du, dd_dv;
  };
  std::optional<Sample> sample_bilinear(const Vector2d& u) const;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> idepth_;
  std::vector<double> var_;
  std::vector<std::uint8_t> mask_;
};

using KeyframeId = int;

/// Keyframe with the image and depth pyramids direct alignment needs.
/// Shared as an immutable snapshot between tracking and mapping.
struct KeyFrame {
  KeyframeId id = 0;
  double timestamp = 0.0;
  Image left;
  Image right;
  StereoRig rig;
  DepthMap depth;
  RigidTransform pose;  ///< world -> camera at creation time

  ImagePyramid pyramid;
  std::vector<DepthMap> depth_pyramid;

  static std::shared_ptr<const KeyFrame> create(KeyframeId id, double timestamp, Image left, Image right,
                                                const StereoRig& rig, DepthMap depth, const RigidTransform& pose,
                                                int pyramid_levels);
};

using KeyFramePtr = std::shared_ptr<const KeyFrame>;

/// Pyramid depth suitable for an image of the given width: 4 levels above
/// 640 px, 3 otherwise, reduced while the coarsest level would be under 8x8.
int default_pyramid_levels(int width, int height);

}  // namespace semidirect
