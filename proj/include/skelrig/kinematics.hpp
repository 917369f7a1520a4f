#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "skelrig/error.hpp"
#include "skelrig/rigmath.hpp"

namespace skelrig {

enum class JointKind { Free6, Ball3, Hinge1, Universal2, SpineCC3, Scapula3, Pronation1 };

/// Rotational DOFs carried in the pose vector. Free6 contributes three; its
/// translation lives in Pose::trans.
int dof_count(JointKind kind);
const char* to_string(JointKind kind);
JointKind joint_kind_from_string(std::string_view name);

struct DofLimit {
  double lo = -kPi;
  double hi = kPi;
};

struct JointSpec {
  std::string name;
  int parent = -1;
  JointKind kind = JointKind::Ball3;
  int dof_offset = 0;
  Vec3 rest_joint = Vec3::Zero();  // template T-pose location (world, metres)
  std::vector<std::string> dof_names;
  std::vector<DofLimit> limits;
  Vec3 axis = Vec3::UnitX();       // hinge / first wrist axis, bone frame
  Vec3 axis2 = Vec3::UnitZ();      // second wrist axis, bone frame
  Vec3 semi_axes = Vec3::Constant(0.1);     // scapula ellipsoid a, b, c
  Mat3 ellipsoid_frame = Mat3::Identity();  // ellipsoid axes in the bone frame
  int axis_end = -1;               // pronation: joint at the radius extremity

  int dofs() const { return dof_count(kind); }
};

class KinematicTree {
 public:
  KinematicTree() = default;
  /// Validates topological order, DOF slices and limits.
  explicit KinematicTree(std::vector<JointSpec> joints);

  int size() const { return static_cast<int>(joints_.size()); }
  const JointSpec& joint(int i) const { return joints_[i]; }
  const std::vector<JointSpec>& joints() const { return joints_; }
  int dof_count() const { return dof_total_; }
  /// Joint indices from the root down to i (inclusive).
  const std::vector<int>& chain(int i) const { return chains_[i]; }
  const std::vector<int>& children(int i) const { return children_[i]; }
  bool is_ancestor_or_self(int ancestor, int i) const;
  int find(std::string_view name) const;
  int dof_joint(int dof) const { return dof_joint_[dof]; }
  std::vector<std::string> dof_names() const;
  std::vector<DofLimit> dof_limits() const;

 private:
  std::vector<JointSpec> joints_;
  std::vector<std::vector<int>> chains_;
  std::vector<std::vector<int>> children_;
  std::vector<int> dof_joint_;
  int dof_total_ = 0;
};

/// Checks the 24 group / 46 DOF layout expected of full-body models.
void require_full_body_layout(const KinematicTree& tree);

struct Pose {
  Eigen::VectorXd q;
  Vec3 trans = Vec3::Zero();

  static Pose zero(int dofs) { return Pose{Eigen::VectorXd::Zero(dofs), Vec3::Zero()}; }
};

/// Per-joint T-pose frames: orientation R_k and location J_k (world).
template <typename T>
struct JointFrames {
  std::vector<Mat3T<T>> rotation;
  std::vector<Vec3T<T>> joint;
};

using Placement = JointFrames<double>;

/// Shape-dependent quantities needed by individual joint models.
template <typename T>
struct JointContext {
  T spine_length = T(0);
  Vec3T<T> elbow_point = Vec3T<T>::Zero();
  Vec3T<T> extremity = Vec3T<T>::Zero();
  Mat3T<T> bone_rotation = Mat3T<T>::Identity();
};

// ---------------------------------------------------------------------------
// Joint models (generic scalar)

/// Constant-curvature arc of length l bent by (qx, qz); returns the tip
/// displacement from the arc base, tangent along +y.
template <typename T>
Vec3T<T> spine_translation_t(const T& qx, const T& qz, const T& l) {
  using std::asin;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T sz = sin(qz), cz = cos(qz), sx = sin(qx);
  const T u = sz * sz + cz * cz * sx * sx;  // sin^2 alpha
  const double uv = scalar_value(u);
  if (uv > 1.0 + tolerance::kSpineDomain) fail(ErrorCode::DomainError, "spine bend out of domain");
  T f, g;
  if (uv < tolerance::kSpineSmallAngle * tolerance::kSpineSmallAngle) {
    const T a2 = u + u * u / 3.0;
    f = 0.5 + a2 / 24.0;
    g = 1.0 - a2 / 6.0;
  } else {
    const T s = uv >= 1.0 ? T(1.0) : sqrt(u);
    const T alpha = asin(s);
    const T h = sin(alpha / 2.0);
    f = 2.0 * h * h / (alpha * s);
    g = s / alpha;
  }
  return Vec3T<T>(-l * f * sz, l * g, l * f * cz * sx);
}

/// Ellipsoid anchor p(u, v) and tangent frame rotated by w about the normal.
template <typename T>
Transform<T> scapula_transform_t(const T& u, const T& v, const T& w, const Vec3& abc) {
  using std::cos;
  using std::sin;
  const T a(abc.x()), b(abc.y()), c(abc.z());
  const Vec3T<T> p(a * sin(u) * cos(v), b * sin(v), c * cos(u) * cos(v));
  const Vec3T<T> n = Vec3T<T>(p.x() / (a * a), p.y() / (b * b), p.z() / (c * c)).normalized();
  const Vec3T<T> e1 = Vec3T<T>(a * cos(u), T(0), -c * sin(u)).normalized();
  const Vec3T<T> e2 = n.cross(e1);
  Mat3T<T> F;
  F.col(0) = e1;
  F.col(1) = e2;
  F.col(2) = n;
  return Transform<T>(F * rot_z(w), p);
}

/// Rotation by rho about the line through p0 and p1.
template <typename T>
Transform<T> pronation_transform_t(const T& rho, const Vec3T<T>& p0, const Vec3T<T>& p1) {
  const Vec3T<T> d = p1 - p0;
  if (scalar_value(T(d.norm())) < tolerance::kAxisPoints) {
    fail(ErrorCode::DegenerateAxis, "pronation axis points coincide");
  }
  const Mat3T<T> R = axis_angle<T>(d / d.norm(), rho);
  return Transform<T>(R, p0 - R * p0);
}

/// G^B for one joint in its own bone frame; q points at the joint's DOF slice.
template <typename T>
Transform<T> joint_local_transform_t(const JointSpec& spec, const T* q, const Vec3T<T>& trans,
                                     const JointContext<T>& ctx) {
  switch (spec.kind) {
    case JointKind::Free6:
      return Transform<T>(euler_xzy(q[0], q[1], q[2]), ctx.bone_rotation.transpose() * trans);
    case JointKind::Ball3:
      return Transform<T>::rotation(euler_xzy(q[0], q[1], q[2]));
    case JointKind::Hinge1:
      return Transform<T>::rotation(axis_angle<T>(spec.axis, q[0]));
    case JointKind::Universal2:
      return Transform<T>::rotation(axis_angle<T>(spec.axis, q[0]) * axis_angle<T>(spec.axis2, q[1]));
    case JointKind::SpineCC3: {
      const T l = ctx.spine_length;
      if (!(scalar_value(l) > 0)) fail(ErrorCode::DomainError, "spine length must be positive");
      Vec3T<T> t = spine_translation_t(q[0], q[1], l);
      t.y() -= l;
      return Transform<T>(euler_xzy(q[0], q[1], q[2]), t);
    }
    case JointKind::Scapula3: {
      const Mat3T<T> E = spec.ellipsoid_frame.cast<T>();
      const Vec3T<T> center = -(E * Vec3T<T>(T(0), T(0), T(spec.semi_axes.z())));
      const Transform<T> s = scapula_transform_t(q[0], q[1], q[2], spec.semi_axes);
      return Transform<T>(E * s.R * E.transpose(), center + E * s.t);
    }
    case JointKind::Pronation1:
      return pronation_transform_t(q[0], ctx.elbow_point, ctx.extremity);
  }
  return Transform<T>();
}

template <typename T>
JointContext<T> joint_context_t(const KinematicTree& tree, const JointFrames<T>& frames, int i) {
  const JointSpec& spec = tree.joint(i);
  JointContext<T> ctx;
  ctx.bone_rotation = frames.rotation[i];
  if (spec.kind == JointKind::SpineCC3 && spec.parent >= 0) {
    ctx.spine_length = (frames.joint[i] - frames.joint[spec.parent]).norm();
  }
  if (spec.kind == JointKind::Pronation1) {
    if (spec.parent < 0 || spec.axis_end < 0) fail(ErrorCode::MissingPlacement, "pronation joint needs parent and extremity");
    const Mat3T<T> rt = frames.rotation[i].transpose();
    ctx.elbow_point = rt * (frames.joint[spec.parent] - frames.joint[i]);
    ctx.extremity = rt * (frames.joint[spec.axis_end] - frames.joint[i]);
  }
  return ctx;
}

template <typename T>
struct FkResult {
  std::vector<Transform<T>> skin;  // deformation applied to rest-pose points
  std::vector<Transform<T>> skel;  // posed bone frame
};

/// Skin transforms  A_k = T(J_k) R_k G^B_k R_k^T T(-J_k),  G^skin_i = prod A_k.
/// Skeleton transforms  G^skel_i = prod T(d_k) R^rel_k G^B_k  with parent
/// relative offsets d_k = R_p^T (J_k - J_p) and rotations R^rel_k = R_p^T R_k.
template <typename T>
FkResult<T> forward_kinematics_t(const KinematicTree& tree, const T* q, const Vec3T<T>& trans,
                                 const JointFrames<T>& frames) {
  const int n = tree.size();
  if (static_cast<int>(frames.rotation.size()) != n || static_cast<int>(frames.joint.size()) != n) {
    fail(ErrorCode::MissingPlacement, "placement does not cover every joint");
  }
  FkResult<T> out;
  out.skin.resize(n);
  out.skel.resize(n);
  for (int k = 0; k < n; ++k) {
    const JointSpec& spec = tree.joint(k);
    const JointContext<T> ctx = joint_context_t(tree, frames, k);
    const Transform<T> local = joint_local_transform_t(spec, q + spec.dof_offset, trans, ctx);
    const Transform<T> frame(frames.rotation[k], frames.joint[k]);
    const Transform<T> A = frame * local * frame.inverse();
    if (spec.parent < 0) {
      out.skin[k] = A;
      out.skel[k] = frame * local;
    } else {
      const int p = spec.parent;
      const Mat3T<T> rpt = frames.rotation[p].transpose();
      const Transform<T> rel(rpt * frames.rotation[k], rpt * (frames.joint[k] - frames.joint[p]));
      out.skin[k] = out.skin[p] * A;
      out.skel[k] = out.skel[p] * rel * local;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// double-precision API

Vec3 spine_translation(const Vec3& q, double length);
RigidTransform scapula_transform(const Vec3& q, const Vec3& semi_axes);
RigidTransform pronation_transform(double rho, const Vec3& p0, const Vec3& p1);
JointContext<double> joint_context(const KinematicTree& tree, const Placement& placement, int joint);
RigidTransform joint_local_transform(const JointSpec& spec, const Pose& pose, const JointContext<double>& ctx);
FkResult<double> forward_kinematics(const KinematicTree& tree, const Pose& pose, const Placement& placement);

/// World-frame twist of one DOF: d x / d q = angular x x + linear.
struct Twist {
  Vec3 angular = Vec3::Zero();
  Vec3 linear = Vec3::Zero();
  Vec3 apply(const Vec3& x) const { return angular.cross(x) + linear; }
};

/// Twists for every rotational DOF at the given pose.
std::vector<Twist> dof_twists(const KinematicTree& tree, const Pose& pose, const Placement& placement,
                              const FkResult<double>& fk);

/// Clamps q to the joint limits; returns the number of clamped entries.
int clamp_to_limits(const KinematicTree& tree, Eigen::VectorXd& q);

}  // namespace skelrig
