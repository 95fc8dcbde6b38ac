#include "semidirect/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semidirect/error.hpp"

namespace semidirect {

namespace {

// Below this rotation angle the exp/log coefficients use Taylor expansions.
constexpr double kSmallAngle = 1e-8;

}  // namespace

RigidTransform RigidTransform::from_matrix(const Matrix4d& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Matrix4d RigidTransform::matrix() const {
  Matrix4d m = Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Matrix3d hat(const Vector3d& w) {
  Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Vector3d vee(const Matrix3d& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

namespace {

// (1 - cos t) / t^2 written without the cancellation of 1 - cos t.
double half_versine_ratio(double theta) {
  const double s = std::sin(0.5 * theta) / theta;
  return 2.0 * s * s;
}

}  // namespace

Matrix3d so3_exp(const Vector3d& w) {
  const double theta_sq = w.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  double a;
  double b;
  if (theta < kSmallAngle) {
    a = 1.0 - theta_sq / 6.0;
    b = 0.5 - theta_sq / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = half_versine_ratio(theta);
  }
  const Matrix3d wx = hat(w);
  return Matrix3d::Identity() + a * wx + b * wx * wx;
}

Vector3d so3_log(const Matrix3d& r) {
  const Vector3d s = 0.5 * vee(r - r.transpose());  // sin(theta) * axis
  const double sin_t = s.norm();
  const double cos_t = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_t, cos_t);

  if (theta < kSmallAngle) return s * (1.0 + theta * theta / 6.0);
  if (cos_t > 0.0) return s * (theta / sin_t);

  // Past pi/2 the antisymmetric part loses precision; recover the axis from
  // the symmetric part (1 - cos) a a^T instead.
  const Matrix3d sym = 0.5 * (r + r.transpose()) - cos_t * Matrix3d::Identity();
  Eigen::Index i = 0;
  sym.diagonal().maxCoeff(&i);
  const double one_minus_cos = 1.0 - cos_t;
  const double ai = std::sqrt(std::max(sym(i, i), 0.0) / one_minus_cos);
  Vector3d axis = sym.col(i) / (one_minus_cos * ai);
  axis.normalize();
  if (sin_t > 1e-12 && axis.dot(s) < 0.0) axis = -axis;
  return theta * axis;
}

RigidTransform exp_map(const Twist& xi) {
  const double theta_sq = xi.w.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  double a;
  double b;
  double c;
  if (theta < kSmallAngle) {
    a = 1.0 - theta_sq / 6.0;
    b = 0.5 - theta_sq / 24.0;
    c = 1.0 / 6.0 - theta_sq / 120.0;
  } else {
    a = std::sin(theta) / theta;
    b = half_versine_ratio(theta);
    c = (theta - std::sin(theta)) / (theta_sq * theta);
  }
  const Matrix3d wx = hat(xi.w);
  const Matrix3d wx2 = wx * wx;
  const Matrix3d r = Matrix3d::Identity() + a * wx + b * wx2;
  const Matrix3d v = Matrix3d::Identity() + b * wx + c * wx2;
  return {r, v * xi.v};
}

Twist log_map(const RigidTransform& t) {
  const Vector3d w = so3_log(t.rotation);
  const double theta_sq = w.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  double c;
  if (theta < kSmallAngle) {
    c = 1.0 / 12.0 + theta_sq / 720.0;
  } else {
    c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / theta_sq;
  }
  const Matrix3d wx = hat(w);
  const Matrix3d v_inv = Matrix3d::Identity() - 0.5 * wx + c * wx * wx;
  return {v_inv * t.translation, w};
}

Matrix6d adjoint(const RigidTransform& t) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = t.rotation;
  ad.topRightCorner<3, 3>() = hat(t.translation) * t.rotation;
  ad.bottomRightCorner<3, 3>() = t.rotation;
  return ad;
}

double rotation_angle(const RigidTransform& t) { return so3_log(t.rotation).norm(); }

void CameraIntrinsics::validate() const {
  std::ostringstream why;
  if (!(fx > 0.0) || !(fy > 0.0)) why << "focal lengths must be positive; ";
  if (width <= 0 || height <= 0) why << "image size must be positive; ";
  if (!(cx >= 0.0 && cx < width)) why << "cx outside [0, width); ";
  if (!(cy >= 0.0 && cy < height)) why << "cy outside [0, height); ";
  if (!why.str().empty()) throw Error(ErrorCode::InvalidArgument, "CameraIntrinsics: " + why.str());
}

CameraIntrinsics CameraIntrinsics::at_level(int level) const {
  const double s = std::ldexp(1.0, -level);
  CameraIntrinsics k;
  k.fx = fx * s;
  k.fy = fy * s;
  k.cx = (cx + 0.5) * s - 0.5;
  k.cy = (cy + 0.5) * s - 0.5;
  k.width = width >> level;
  k.height = height >> level;
  return k;
}

Matrix3d CameraIntrinsics::matrix() const {
  Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void StereoRig::validate() const {
  intrinsics.validate();
  if (!(baseline > 0.0)) throw Error(ErrorCode::InvalidArgument, "StereoRig: baseline must be positive");
}

Vector2d project(const Vector3d& p, const CameraIntrinsics& k) {
  if (!(p.z() > kMinProjectableDepth)) {
    throw Error(ErrorCode::NonPositiveDepth, "point depth " + std::to_string(p.z()));
  }
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Vector3d unproject(const Vector2d& u, double inverse_depth, const CameraIntrinsics& k) {
  if (!(inverse_depth > 0.0)) {
    throw Error(ErrorCode::NonPositiveInverseDepth, "inverse depth " + std::to_string(inverse_depth));
  }
  const double z = 1.0 / inverse_depth;
  return {(u.x() - k.cx) / k.fx * z, (u.y() - k.cy) / k.fy * z, z};
}

InverseDepth disparity_to_inverse_depth(double disparity, const StereoRig& rig, double disparity_sigma) {
  if (!(disparity > 0.0)) {
    if (disparity == 0.0) throw Error(ErrorCode::ZeroDisparity, "point at infinity");
    throw Error(ErrorCode::InvalidArgument, "negative disparity " + std::to_string(disparity));
  }
  const double scale = 1.0 / (rig.intrinsics.fx * rig.baseline);
  const double sigma_d = disparity_sigma * scale;
  return {disparity * scale, sigma_d * sigma_d};
}

}  // namespace semidirect
