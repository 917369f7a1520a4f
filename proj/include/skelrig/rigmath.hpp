#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace skelrig {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
template <typename T>
using Vec3T = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3T = Eigen::Matrix<T, 3, 3>;

// N x 3 point arrays (vertices, joints, markers).
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

inline constexpr double kPi = 3.14159265358979323846;

namespace tolerance {
inline constexpr double kOrthonormality = 1e-10;
inline constexpr double kUnitNorm = 1e-8;
inline constexpr double kAntiparallel = 1e-6;
inline constexpr double kSingularValue = 1e-12;
inline constexpr double kAxisPoints = 1e-9;
inline constexpr double kSpineSmallAngle = 1e-6;
inline constexpr double kSpineDomain = 1e-12;
inline constexpr double kSegmentLength = 1e-6;
}  // namespace tolerance

// Scalar access that also works for autodiff jets (specialised in autodiff.hpp).
template <typename T>
struct ScalarOps {
  static double value(const T& x) { return static_cast<double>(x); }
};

template <typename T>
double scalar_value(const T& x) {
  return ScalarOps<T>::value(x);
}

template <typename T>
Mat3T<T> rot_x(const T& a) {
  using std::cos;
  using std::sin;
  const T c = cos(a), s = sin(a);
  Mat3T<T> m;
  m << T(1), T(0), T(0), T(0), c, -s, T(0), s, c;
  return m;
}

template <typename T>
Mat3T<T> rot_y(const T& a) {
  using std::cos;
  using std::sin;
  const T c = cos(a), s = sin(a);
  Mat3T<T> m;
  m << c, T(0), s, T(0), T(1), T(0), -s, T(0), c;
  return m;
}

template <typename T>
Mat3T<T> rot_z(const T& a) {
  using std::cos;
  using std::sin;
  const T c = cos(a), s = sin(a);
  Mat3T<T> m;
  m << c, -s, T(0), s, c, T(0), T(0), T(0), T(1);
  return m;
}

/// Intrinsic X, then Z, then Y: R = Rx(qx) * Rz(qz) * Ry(qy).
template <typename T>
Mat3T<T> euler_xzy(const T& qx, const T& qz, const T& qy) {
  return rot_x(qx) * rot_z(qz) * rot_y(qy);
}

template <typename T>
Mat3T<T> skew(const Vec3T<T>& v) {
  Mat3T<T> m;
  m << T(0), -v.z(), v.y(), v.z(), T(0), -v.x(), -v.y(), v.x(), T(0);
  return m;
}

/// Rodrigues rotation about a unit axis.
template <typename T, typename A>
Mat3T<T> axis_angle(const Eigen::MatrixBase<A>& unit_axis, const T& angle) {
  using std::cos;
  using std::sin;
  const Vec3T<T> k = unit_axis.template cast<T>();
  const Mat3T<T> K = skew<T>(k);
  return Mat3T<T>::Identity() + sin(angle) * K + (T(1) - cos(angle)) * (K * K);
}

template <typename T>
struct Transform {
  Mat3T<T> R = Mat3T<T>::Identity();
  Vec3T<T> t = Vec3T<T>::Zero();

  Transform() = default;
  Transform(const Mat3T<T>& rotation, const Vec3T<T>& translation) : R(rotation), t(translation) {}

  static Transform identity() { return Transform(); }
  static Transform translation(const Vec3T<T>& v) { return Transform(Mat3T<T>::Identity(), v); }
  static Transform rotation(const Mat3T<T>& m) { return Transform(m, Vec3T<T>::Zero()); }

  Transform operator*(const Transform& o) const { return Transform(R * o.R, R * o.t + t); }
  Vec3T<T> operator*(const Vec3T<T>& p) const { return R * p + t; }
  Transform inverse() const {
    const Mat3T<T> rt = R.transpose();
    return Transform(rt, -(rt * t));
  }
  Eigen::Matrix<T, 4, 4> matrix() const {
    Eigen::Matrix<T, 4, 4> m = Eigen::Matrix<T, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = R;
    m.template topRightCorner<3, 1>() = t;
    return m;
  }
};

using RigidTransform = Transform<double>;

/// A 3x3 matrix known to be a proper rotation.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  /// Throws DomainError unless `m` is orthonormal with det +1 to kOrthonormality.
  static Rotation from_matrix(const Mat3& m);
  /// Wraps a matrix the caller already knows to be a rotation.
  static Rotation unchecked(const Mat3& m) { return Rotation(m); }
  static Rotation about_axis(const Vec3& axis, double angle);

  const Mat3& matrix() const { return m_; }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation inverse() const { return Rotation(m_.transpose()); }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

bool is_rotation(const Mat3& m, double tol = tolerance::kOrthonormality);

/// q = [qx, qz, qy].
Rotation euler_xzy_to_rotation(const Vec3& q);
/// Inverse of euler_xzy_to_rotation with qz in [-pi/2, pi/2].
Vec3 rotation_to_euler_xzy(const Mat3& R);

struct AlignedRotation {
  Rotation rotation;
  bool antiparallel = false;
};

/// Minimal rotation taking unit a onto unit b. For (near) antiparallel input the
/// half-turn axis is normalize(a x e) with e the canonical axis least aligned with a.
AlignedRotation rotation_between(const Vec3& a, const Vec3& b);

/// Nearest rotation in Frobenius norm. Throws DegenerateInput for rank < 2.
Rotation project_to_rotation(const Mat3& m);

/// Rotation vector (axis * angle) of a rotation.
Vec3 rotation_log(const Mat3& R);
Mat3 rotation_exp(const Vec3& w);

/// Best rigid transform mapping `from` onto `to` (rows are points).
RigidTransform kabsch(const Points& from, const Points& to);

}  // namespace skelrig
