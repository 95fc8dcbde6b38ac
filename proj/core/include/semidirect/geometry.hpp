#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace semidirect {

using Vector2d = Eigen::Vector2d;
using Vector3d = Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix3d = Eigen::Matrix3d;
using Matrix4d = Eigen::Matrix4d;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// se(3) coordinates. Stacked as (v, w) wherever a 6-vector is needed.
struct Twist {
  Vector3d v = Vector3d::Zero();  ///< translational part [m]
  Vector3d w = Vector3d::Zero();  ///< rotational part [rad]

  Twist() = default;
  Twist(const Vector3d& v_, const Vector3d& w_) : v(v_), w(w_) {}
  explicit Twist(const Vector6d& xi) : v(xi.head<3>()), w(xi.tail<3>()) {}

  Vector6d vector() const {
    Vector6d xi;
    xi << v, w;
    return xi;
  }
  bool is_finite() const { return v.allFinite() && w.allFinite(); }
};

/// Rigid-body motion p' = R p + t.
struct RigidTransform {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  RigidTransform() = default;
  RigidTransform(const Matrix3d& r, const Vector3d& t) : rotation(r), translation(t) {}
  RigidTransform(const Eigen::Quaterniond& q, const Vector3d& t)
      : rotation(q.normalized().toRotationMatrix()), translation(t) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Matrix4d& m);

  RigidTransform inverse() const {
    const Matrix3d rt = rotation.transpose();
    return {rt, -rt * translation};
  }

  Vector3d operator*(const Vector3d& p) const { return rotation * p + translation; }
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  Matrix4d matrix() const;
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation).normalized(); }

  /// Orthonormality and determinant check at the given tolerance.
  bool is_valid(double tol = 1e-9) const;
};

/// compose(a, b) applies b first: compose(a, b) * p == a * (b * p).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

Matrix3d hat(const Vector3d& w);
Vector3d vee(const Matrix3d& m);

/// Rotation from an axis-angle vector (Rodrigues).
Matrix3d so3_exp(const Vector3d& w);
/// Axis-angle vector with norm in [0, pi]. At exactly pi the axis sign is
/// chosen so that its largest-magnitude component is positive.
Vector3d so3_log(const Matrix3d& r);

RigidTransform exp_map(const Twist& xi);
Twist log_map(const RigidTransform& t);

/// Ad_T with (v, w) ordering: exp(Ad_T xi) = T exp(xi) T^-1.
Matrix6d adjoint(const RigidTransform& t);

/// Rotation angle of the transform [rad].
double rotation_angle(const RigidTransform& t);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws InvalidArgument when the invariants do not hold.
  void validate() const;
  /// Intrinsics of pyramid level `level` built by 2x2 block averaging.
  CameraIntrinsics at_level(int level) const;
  Matrix3d matrix() const;
};

struct StereoRig {
  CameraIntrinsics intrinsics;
  double baseline = 1.0;  ///< [m]

  void validate() const;
};

/// Minimum depth treated as projectable.
inline constexpr double kMinProjectableDepth = 1e-6;
/// Disparity standard deviation used to seed inverse-depth variance [px].
inline constexpr double kDefaultDisparitySigma = 0.5;

Vector2d project(const Vector3d& p, const CameraIntrinsics& k);
Vector3d unproject(const Vector2d& u, double inverse_depth, const CameraIntrinsics& k);

struct InverseDepth {
  double d = 0.0;    ///< [1/m]
  double var = 0.0;  ///< [1/m^2]
};

InverseDepth disparity_to_inverse_depth(double disparity, const StereoRig& rig,
                                        double disparity_sigma = kDefaultDisparitySigma);

}  // namespace semidirect
