#include "skelrig/rigmath.hpp"

#include <algorithm>

#include <Eigen/SVD>

#include "skelrig/error.hpp"

namespace skelrig {

bool is_rotation(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  if ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(m.determinant() - 1.0) <= tol;
}

Rotation Rotation::from_matrix(const Mat3& m) {
  if (!is_rotation(m)) fail(ErrorCode::DomainError, "matrix is not a proper rotation");
  return Rotation(m);
}

Rotation Rotation::about_axis(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0)) fail(ErrorCode::DegenerateAxis, "zero rotation axis");
  return Rotation(axis_angle<double>(axis / n, angle));
}

Rotation euler_xzy_to_rotation(const Vec3& q) {
  return Rotation::unchecked(euler_xzy<double>(q[0], q[1], q[2]));
}

Vec3 rotation_to_euler_xzy(const Mat3& R) {
  // R01 = -sin(qz), R21/R11 = tan(qx), R02/R00 = tan(qy)
  const double sz = std::clamp(-R(0, 1), -1.0, 1.0);
  const double qz = std::asin(sz);
  double qx, qy;
  if (std::abs(sz) < 1.0 - 1e-12) {
    qx = std::atan2(R(2, 1), R(1, 1));
    qy = std::atan2(R(0, 2), R(0, 0));
  } else {
    // gimbal lock, put everything on qx
    qy = 0.0;
    qx = std::atan2(-R(1, 2), R(2, 2));
  }
  return {qx, qz, qy};
}

AlignedRotation rotation_between(const Vec3& a, const Vec3& b) {
  if (std::abs(a.norm() - 1.0) > tolerance::kUnitNorm || std::abs(b.norm() - 1.0) > tolerance::kUnitNorm) {
    fail(ErrorCode::DomainError, "rotation_between expects unit vectors");
  }
  const double c = a.dot(b);
  if (c > -1.0 + tolerance::kAntiparallel) {
    const Vec3 v = a.cross(b);
    const Mat3 K = skew<double>(v);
    const Mat3 R = Mat3::Identity() + K + K * K / (1.0 + c);
    return {Rotation::unchecked(R), false};
  }
  int least = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(a[i]) < std::abs(a[least])) least = i;
  }
  const Vec3 axis = a.cross(Vec3::Unit(least)).normalized();
  const Mat3 half = axis_angle<double>(axis, kPi);
  // finish the remaining small rotation from -a to b so that R a = b holds exactly
  const Vec3 na = -a;
  const Vec3 v = na.cross(b);
  const Mat3 K = skew<double>(v);
  const Mat3 rest = Mat3::Identity() + K + K * K / (1.0 + na.dot(b));
  return {Rotation::unchecked(rest * half), true};
}

Rotation project_to_rotation(const Mat3& m) {
  if (!m.allFinite()) fail(ErrorCode::DegenerateInput, "non-finite matrix");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (s[1] <= tolerance::kSingularValue * std::max(s[0], 1.0)) {
    fail(ErrorCode::DegenerateInput, "matrix has fewer than two non-zero singular values");
  }
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (U * V.transpose()).determinant() < 0 ? -1.0 : 1.0;
  return Rotation::unchecked(U * D * V.transpose());
}

Vec3 rotation_log(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  return aa.axis() * aa.angle();
}

Mat3 rotation_exp(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return axis_angle<double>(Vec3(w / angle), angle);
}

RigidTransform kabsch(const Points& from, const Points& to) {
  if (from.rows() != to.rows() || from.rows() < 3) {
    fail(ErrorCode::DimensionMismatch, "kabsch needs matching point sets of at least 3 points");
  }
  const Vec3 ca = from.colwise().mean().transpose();
  const Vec3 cb = to.colwise().mean().transpose();
  const Mat3 H = (from.rowwise() - ca.transpose()).transpose() * (to.rowwise() - cb.transpose());
  const Mat3 R = project_to_rotation(H.transpose()).matrix();
  return RigidTransform(R, cb - R * ca);
}

}  // namespace skelrig
