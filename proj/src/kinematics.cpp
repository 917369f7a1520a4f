#include "skelrig/kinematics.hpp"

#include <algorithm>
#include <array>

#include "skelrig/autodiff.hpp"

namespace skelrig {

int dof_count(JointKind kind) {
  switch (kind) {
    case JointKind::Free6: return 3;
    case JointKind::Ball3: return 3;
    case JointKind::Hinge1: return 1;
    case JointKind::Universal2: return 2;
    case JointKind::SpineCC3: return 3;
    case JointKind::Scapula3: return 3;
    case JointKind::Pronation1: return 1;
  }
  return 0;
}

const char* to_string(JointKind kind) {
  switch (kind) {
    case JointKind::Free6: return "free6";
    case JointKind::Ball3: return "ball3";
    case JointKind::Hinge1: return "hinge1";
    case JointKind::Universal2: return "universal2";
    case JointKind::SpineCC3: return "spine_cc3";
    case JointKind::Scapula3: return "scapula3";
    case JointKind::Pronation1: return "pronation1";
  }
  return "?";
}

JointKind joint_kind_from_string(std::string_view name) {
  for (JointKind k : {JointKind::Free6, JointKind::Ball3, JointKind::Hinge1, JointKind::Universal2,
                      JointKind::SpineCC3, JointKind::Scapula3, JointKind::Pronation1}) {
    if (name == to_string(k)) return k;
  }
  fail(ErrorCode::FormatError, "unknown joint kind '" + std::string(name) + "'");
}

KinematicTree::KinematicTree(std::vector<JointSpec> joints) : joints_(std::move(joints)) {
  const int n = size();
  if (n == 0) fail(ErrorCode::ConfigError, "empty kinematic tree");
  chains_.resize(n);
  children_.resize(n);
  for (int i = 0; i < n; ++i) {
    const JointSpec& j = joints_[i];
    if (i == 0 && j.parent != -1) fail(ErrorCode::ConfigError, "joint 0 must be the root");
    if (i > 0 && (j.parent < 0 || j.parent >= i)) {
      fail(ErrorCode::ConfigError, "joint '" + j.name + "' must follow its parent");
    }
    if (j.dof_offset != dof_total_) fail(ErrorCode::ConfigError, "DOF slices must be contiguous: " + j.name);
    const int nd = j.dofs();
    if (static_cast<int>(j.limits.size()) != nd || static_cast<int>(j.dof_names.size()) != nd) {
      fail(ErrorCode::ConfigError, "joint '" + j.name + "' needs one limit and name per DOF");
    }
    for (const DofLimit& l : j.limits) {
      if (!(l.lo <= l.hi)) fail(ErrorCode::ConfigError, "inverted limit on " + j.name);
    }
    if (j.kind == JointKind::Pronation1 && (j.axis_end <= i || j.axis_end >= n)) {
      fail(ErrorCode::ConfigError, "pronation joint '" + j.name + "' needs a later extremity joint");
    }
    if (j.kind == JointKind::Free6 && i != 0) fail(ErrorCode::ConfigError, "free6 is only allowed at the root");
    for (int d = 0; d < nd; ++d) dof_joint_.push_back(i);
    dof_total_ += nd;
    if (j.parent >= 0) {
      chains_[i] = chains_[j.parent];
      children_[j.parent].push_back(i);
    }
    chains_[i].push_back(i);
  }
}

bool KinematicTree::is_ancestor_or_self(int ancestor, int i) const {
  const auto& c = chains_[i];
  return std::find(c.begin(), c.end(), ancestor) != c.end();
}

int KinematicTree::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (joints_[i].name == name) return i;
  }
  return -1;
}

std::vector<std::string> KinematicTree::dof_names() const {
  std::vector<std::string> out;
  for (const auto& j : joints_) out.insert(out.end(), j.dof_names.begin(), j.dof_names.end());
  return out;
}

std::vector<DofLimit> KinematicTree::dof_limits() const {
  std::vector<DofLimit> out;
  for (const auto& j : joints_) out.insert(out.end(), j.limits.begin(), j.limits.end());
  return out;
}

void require_full_body_layout(const KinematicTree& tree) {
  if (tree.size() != 24) fail(ErrorCode::ConfigError, "expected 24 bone groups");
  if (tree.dof_count() != 46) fail(ErrorCode::ConfigError, "expected 46 DOF");
}

Vec3 spine_translation(const Vec3& q, double length) {
  if (!(length > 0)) fail(ErrorCode::DomainError, "spine length must be positive");
  return spine_translation_t<double>(q[0], q[1], length);
}

RigidTransform scapula_transform(const Vec3& q, const Vec3& semi_axes) {
  if (!(semi_axes.minCoeff() > 0)) fail(ErrorCode::DomainError, "ellipsoid semi-axes must be positive");
  return scapula_transform_t<double>(q[0], q[1], q[2], semi_axes);
}

RigidTransform pronation_transform(double rho, const Vec3& p0, const Vec3& p1) {
  return pronation_transform_t<double>(rho, p0, p1);
}

JointContext<double> joint_context(const KinematicTree& tree, const Placement& placement, int joint) {
  return joint_context_t(tree, placement, joint);
}

RigidTransform joint_local_transform(const JointSpec& spec, const Pose& pose, const JointContext<double>& ctx) {
  if (spec.dof_offset + spec.dofs() > pose.q.size()) fail(ErrorCode::DimensionMismatch, "pose too short");
  return joint_local_transform_t<double>(spec, pose.q.data() + spec.dof_offset, pose.trans, ctx);
}

FkResult<double> forward_kinematics(const KinematicTree& tree, const Pose& pose, const Placement& placement) {
  if (pose.q.size() != tree.dof_count()) fail(ErrorCode::DimensionMismatch, "pose size does not match tree");
  return forward_kinematics_t<double>(tree, pose.q.data(), pose.trans, placement);
}

std::vector<Twist> dof_twists(const KinematicTree& tree, const Pose& pose, const Placement& placement,
                              const FkResult<double>& fk) {
  using J3 = ceres::Jet<double, 3>;
  std::vector<Twist> out(tree.dof_count());
  for (int k = 0; k < tree.size(); ++k) {
    const JointSpec& spec = tree.joint(k);
    const int nd = spec.dofs();
    const JointContext<double> ctx = joint_context(tree, placement, k);
    JointContext<J3> jctx;
    jctx.spine_length = J3(ctx.spine_length);
    jctx.elbow_point = ctx.elbow_point.cast<J3>();
    jctx.extremity = ctx.extremity.cast<J3>();
    jctx.bone_rotation = ctx.bone_rotation.cast<J3>();
    std::array<J3, 3> qj;
    for (int d = 0; d < nd; ++d) qj[d] = J3(pose.q[spec.dof_offset + d], d);
    const Vec3T<J3> tj = pose.trans.cast<J3>();
    const Transform<J3> L = joint_local_transform_t<J3>(spec, qj.data(), tj, jctx);
    Mat3 R0;
    Vec3 t0;
    for (int r = 0; r < 3; ++r) {
      t0[r] = L.t[r].a;
      for (int c = 0; c < 3; ++c) R0(r, c) = L.R(r, c).a;
    }
    // bone frame at the joint, before the joint's own motion
    const RigidTransform frame(placement.rotation[k], placement.joint[k]);
    const RigidTransform W = spec.parent < 0 ? frame : fk.skin[spec.parent] * frame;
    for (int d = 0; d < nd; ++d) {
      Mat3 dR;
      Vec3 dt;
      for (int r = 0; r < 3; ++r) {
        dt[r] = L.t[r].v[d];
        for (int c = 0; c < 3; ++c) dR(r, c) = L.R(r, c).v[d];
      }
      const Mat3 Om = dR * R0.transpose();
      const Vec3 w(Om(2, 1), Om(0, 2), Om(1, 0));
      const Vec3 v = dt - Om * t0;
      Twist tw;
      tw.angular = W.R * w;
      tw.linear = W.R * v - tw.angular.cross(W.t);
      out[spec.dof_offset + d] = tw;
    }
  }
  return out;
}

int clamp_to_limits(const KinematicTree& tree, Eigen::VectorXd& q) {
  int clamped = 0;
  for (const auto& j : tree.joints()) {
    for (int d = 0; d < j.dofs(); ++d) {
      double& x = q[j.dof_offset + d];
      const double c = std::clamp(x, j.limits[d].lo, j.limits[d].hi);
      if (c != x) {
        x = c;
        ++clamped;
      }
    }
  }
  return clamped;
}

}  // namespace skelrig
