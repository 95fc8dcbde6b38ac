#pragma once

#include <cstdint>
#include <vector>

#include "semidirect/frame.hpp"

namespace semidirect {

struct AlignmentConfig {
  double huber_photo = 0.03;          ///< normalized intensity
  double huber_depth_scale = 0.05;    ///< depth delta = scale * median keyframe inverse depth
  double photometric_sigma = 0.02;    ///< sigma_I, normalized intensity
  bool use_depth = true;              ///< include the inverse-depth residual rows
  int max_iterations = 20;            ///< per pyramid level
  double step_tolerance = 1e-6;
  double relative_decrease_tolerance = 1e-7;
  double stall_tolerance = 1e-5;      ///< relative rise of a rejected step that ends the level
  int max_rejections = 5;             ///< consecutive larger cost increases before giving up
  double min_valid_ratio = 0.3;       ///< rho_min
  double tau_track = 0.034;           ///< max RMS Huber-weighted photometric residual at convergence
  int levels = 0;                     ///< pyramid levels used; 0 = all keyframe levels
};

/// Robust-norm parameters and variances used to weight the residual rows.
/// Per-pixel inverse-depth variances come from the keyframe and frame maps.
struct ResidualWeights {
  double huber_photo = 0.03;
  double huber_depth = 0.01;
  double photometric_variance = 4e-4;

  static ResidualWeights from(const KeyFrame& kf, const AlignmentConfig& config);
};

enum class ResidualKind : std::uint8_t { Photometric, Depth };

struct ResidualRow {
  int pixel = 0;                 ///< keyframe pixel index at the evaluated level
  ResidualKind kind = ResidualKind::Photometric;
  double value = 0.0;
  double weight = 0.0;           ///< Huber derating x inverse variance
  double cost = 0.0;             ///< robust cost contribution of this row
};

struct ResidualSet {
  std::vector<ResidualRow> rows;
  std::size_t hypotheses = 0;    ///< keyframe hypotheses at this level
  std::size_t valid_pixels = 0;  ///< hypotheses that produced a photometric row

  double valid_ratio() const {
    return hypotheses == 0 ? 0.0 : static_cast<double>(valid_pixels) / static_cast<double>(hypotheses);
  }
};

/// Image and instant-stereo depth pyramids of the frame being registered.
struct AlignmentTarget {
  ImagePyramid images;
  std::vector<DepthMap> depths;

  static AlignmentTarget make(const Image& left, const DepthMap& depth, int levels);
};

/// Stacked photometric and inverse-depth residuals of every keyframe
/// hypothesis warped by exp(xi). Pixels warping outside the frame are
/// omitted; depth rows only exist where the frame depth can be sampled.
/// Throws EmptyOverlap when no pixel survives.
ResidualSet residuals(const KeyFrame& kf, const StereoFrame& frame, const DepthMap& frame_depth, const Twist& xi,
                      int level = 0, const AlignmentConfig& config = {});
ResidualSet residuals(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& motion, int level,
                      const AlignmentConfig& config = {});

/// Analytic derivative of each residual row (same order as residuals()) with
/// respect to a left perturbation delta, i.e. d r(exp(delta) * exp(xi)) / d delta at 0.
std::vector<Vector6d> jacobian(const KeyFrame& kf, const StereoFrame& frame, const DepthMap& frame_depth,
                               const Twist& xi, int level = 0, const AlignmentConfig& config = {});
std::vector<Vector6d> jacobian(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& motion,
                               int level, const AlignmentConfig& config = {});

struct AlignmentResult {
  RigidTransform motion;            ///< keyframe camera -> frame camera
  /// Mean robust cost per row at level 0 over the rows valid at both the
  /// initial and the final motion, so the two are directly comparable.
  double cost = 0.0;
  double initial_cost = 0.0;        ///< infinite when the initial motion had no overlap
  std::vector<int> iterations;      ///< accepted + rejected iterations, indexed by level
  double valid_ratio = 0.0;
  double photometric_rms = 0.0;     ///< RMS Huber-weighted photometric residual at level 0
  bool converged = false;
};

/// Coarse-to-fine iteratively re-weighted Gauss-Newton. Steps that raise the
/// cost are rejected and damped; `max_rejections` consecutive rejections
/// throw DivergedAlignment.
AlignmentResult align(const KeyFrame& kf, const StereoFrame& frame, const DepthMap& frame_depth, const Twist& init,
                      const AlignmentConfig& config = {});
AlignmentResult align(const KeyFrame& kf, const AlignmentTarget& target, const RigidTransform& init,
                      const AlignmentConfig& config = {});

}  // namespace semidirect
