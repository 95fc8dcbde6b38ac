#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "semidirect/frame.hpp"

namespace semidirect {

enum class KeypointClass : std::uint8_t { CornerMin = 0, CornerMax = 1, BlobMin = 2, BlobMax = 3 };

inline constexpr int kDescriptorLength = 16;
using Descriptor = std::array<float, kDescriptorLength>;

struct Keypoint {
  Vector2d u;  ///< sub-pixel position
  KeypointClass type = KeypointClass::BlobMax;
  float response = 0.0f;
  Descriptor descriptor{};
};

struct FeatureConfig {
  int nms_radius = 5;            ///< [px]
  float response_threshold = 0.08f;
  int search_half_width = 100;   ///< temporal search window is 2*half_width x 2*half_height
  int search_half_height = 50;
  double epipolar_band = 2.0;    ///< [px]
  int max_disparity = 128;       ///< stereo legs [px]
  double min_disparity = 0.5;    ///< triangulation cutoff [px]
  int ransac_iterations = 200;
  double inlier_threshold = 1.5; ///< reprojection [px]
  int min_inliers = 6;
  int gauss_newton_iterations = 20;
  int refine_half_window = 4;    ///< sub-pixel refinement patch is (2r+1)^2 [px]
};

/// Blob and checkerboard-corner filter responses with non-maximum /
/// non-minimum suppression, split into four classes.
std::vector<Keypoint> detect(const Image& img, const FeatureConfig& config = {});

struct StereoKeypoints {
  std::vector<Keypoint> left;
  std::vector<Keypoint> right;
};

inline StereoKeypoints detect_stereo(const StereoFrame& frame, const FeatureConfig& config = {}) {
  return {detect(frame.left, config), detect(frame.right, config)};
}

/// Indices into the four keypoint lists of one closed matching circle.
struct QuadMatch {
  int prev_left = -1;
  int prev_right = -1;
  int cur_right = -1;
  int cur_left = -1;
  Vector2d u_prev_left, u_prev_right, u_cur_right, u_cur_left;
};

/// Circular matching cur-left -> prev-left -> prev-right -> cur-right ->
/// cur-left. Quads whose circle does not return to the start are dropped.
std::vector<QuadMatch> match_circular(const StereoKeypoints& prev, const StereoKeypoints& cur,
                                      const FeatureConfig& config = {});

/// Re-localizes the previous-right, current-right and current-left positions
/// of every quad against the previous-left patch by Lucas-Kanade translation
/// alignment. Positions that fail to converge keep their detected value.
void refine_matches(const StereoFrame& prev, const StereoFrame& cur, std::vector<QuadMatch>& matches,
                    const FeatureConfig& config = {});

struct FeatureMotion {
  RigidTransform motion;         ///< previous camera -> current camera
  std::vector<int> inliers;      ///< indices into the match list
  double mean_reprojection_error = 0.0;  ///< [px], over inliers
  bool reliable = false;
};

/// Stereo egomotion from quad matches: previous-frame points are
/// triangulated, reprojection error into both current images is minimized
/// by Gauss-Newton inside a 3-point RANSAC loop, then refit on the inliers.
FeatureMotion estimate_motion(const std::vector<QuadMatch>& matches, const StereoRig& rig,
                              const FeatureConfig& config, std::uint64_t seed);

}  // namespace semidirect
