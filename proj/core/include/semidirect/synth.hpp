#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semidirect/frame.hpp"
#include "semidirect/trajectory.hpp"

namespace semidirect {

/// Multi-octave value noise laid over a surface's 2D coordinates.
struct TextureParams {
  double cell = 0.4;       ///< lattice spacing of the coarsest octave [m]
  int octaves = 4;
  double contrast = 1.0;   ///< 0 gives a constant surface, 1 spans roughly [0.1, 0.8]
  std::uint64_t seed = 1;
};

/// Plane through `origin` spanned by `u_axis` and `normal x u_axis`.
/// Non-positive half extents make that direction unbounded.
struct TexturedPlane {
  Vector3d origin = Vector3d::Zero();
  Vector3d normal = Vector3d::UnitZ();
  Vector3d u_axis = Vector3d::UnitX();
  double half_u = 0.0;
  double half_v = 0.0;
  TextureParams texture;
};

/// Axis-aligned box in world coordinates, visible from inside or outside.
struct TexturedBox {
  Vector3d center = Vector3d::Zero();
  Vector3d half_size = Vector3d::Ones();
  TextureParams texture;
};

struct NoiseModel {
  double sigma = 0.0;                       ///< additive Gaussian intensity noise
  std::vector<double> brightness_offsets;   ///< per-frame offset, cycled, both cameras
  double right_offset = 0.0;                ///< extra offset on the right camera only
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  std::vector<TexturedPlane> planes;
  std::vector<TexturedBox> boxes;
  StereoRig rig;
  Trajectory trajectory;  ///< left camera -> world
  NoiseModel noise;
  float background = 0.5f;
  int supersample = 1;    ///< n x n texture samples per pixel
};

struct RenderedFrame {
  StereoFrame frame;
  DepthMap depth;         ///< ground-truth inverse depth of the left camera
};

/// Variance attached to ground-truth inverse depths (the map requires var > 0).
inline constexpr double kGroundTruthVariance = 1e-12;

/// Ray-casts both cameras of frame `index`. Throws IndexOutOfRange.
RenderedFrame render(const SyntheticScene& scene, std::size_t index);

/// Left-camera ray hit against the scene geometry, as camera depth z.
std::optional<double> cast_depth(const SyntheticScene& scene, const RigidTransform& cam_to_world, const Vector2d& u);

/// Noise-free texture value at a world point on a surface.
double texture_value(const TextureParams& tex, double s, double t);

/// Fraction of left-camera pixels of frame `index` that hit geometry.
double coverage(const SyntheticScene& scene, std::size_t index);

/// Camera circling in the x-z plane with tangential heading; the last pose
/// coincides with the first. Throws InvalidArgument unless radius > 0 and
/// count >= 8.
Trajectory make_loop_trajectory(double radius, int count, double frame_rate = 10.0);

/// Constant body-frame twist per frame starting at the identity.
Trajectory make_constant_velocity_trajectory(const Twist& per_frame, int count, double frame_rate = 10.0);

/// Parses the line-oriented scene description (see README). Throws
/// MalformedLine with the line number on errors.
SyntheticScene parse_scene(const std::string& text);
SyntheticScene load_scene(const std::filesystem::path& path);

}  // namespace semidirect
