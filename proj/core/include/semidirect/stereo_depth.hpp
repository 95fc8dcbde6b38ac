#pragma once

#include "semidirect/frame.hpp"

namespace semidirect {

struct BlockMatchConfig {
  int window = 15;                  ///< SAD window side [px], odd
  int min_disparity = 0;            ///< [px]
  int max_disparity = 128;          ///< [px]
  double gradient_threshold = 0.02; ///< g_min, normalized intensity units
  double disparity_sigma = kDefaultDisparitySigma;
  int lr_tolerance = 1;             ///< max left/right integer disparity disagreement [px]
};

/// SAD block-matching along rectified scanlines for pixels with gradient
/// magnitude >= g_min and full window support. Sub-pixel disparity from a
/// three-point parabola; pixels failing the left-right check are dropped.
DepthMap block_match(const Image& left, const Image& right, const StereoRig& rig,
                     const BlockMatchConfig& config = {});

/// Reprojects every hypothesis of `source` through `relative` (source camera
/// -> target camera) into a map of the target's size. Variance scales with
/// (d_new / d_old)^4, i.e. the standard deviation with the squared ratio.
/// Colliding hypotheses keep the smaller variance.
DepthMap propagate(const DepthMap& source, const CameraIntrinsics& source_k, const RigidTransform& relative,
                   const CameraIntrinsics& target_k);
DepthMap propagate(const KeyFrame& source, const RigidTransform& relative, const CameraIntrinsics& target_k);

struct FuseConfig {
  double compatibility_sigmas = 2.0;  ///< lambda
};

/// Per-pixel fusion of an instant-stereo map with a propagated map:
/// inverse-variance weighting for compatible hypotheses, otherwise the
/// smaller-variance hypothesis wins.
DepthMap fuse(const DepthMap& stereo, const DepthMap& propagated, const FuseConfig& config = {});

/// Multiplies var(u, v) by 1 + alpha (r / r_max)^2 with r the distance to the
/// principal point and r_max the distance to the farthest image corner.
DepthMap inflate_radial_variance(const DepthMap& map, const CameraIntrinsics& k, double alpha);

/// Drops hypotheses where the image gradient magnitude is below g_min.
DepthMap restrict_to_gradient(const DepthMap& map, const Image& image, double gradient_threshold);

}  // namespace semidirect
