#include "skelrig/ik.hpp"

namespace skelrig {

MarkerRig make_marker_rig(const SkeletonTemplate& skeleton, const MarkerSet& markers, const ScaleSet& scales,
                          const Eigen::VectorXd& beta) {
  if (scales.s.rows() != skeleton.bones()) fail(ErrorCode::DimensionMismatch, "one scale row per bone expected");
  if (static_cast<int>(scales.delta.size()) != markers.size()) {
    fail(ErrorCode::ModelMarkerMismatch, "one offset correction per marker expected");
  }
  MarkerRig rig;
  rig.tree = &skeleton.tree;
  rig.placement = skeleton.placement(scales.s);
  for (int k = 0; k < markers.size(); ++k) {
    const Marker& m = markers.markers[k];
    if (m.bone < 0 || m.bone >= skeleton.bones()) fail(ErrorCode::ModelMarkerMismatch, "marker '" + m.name + "' has no bone");
    rig.bone.push_back(m.bone);
    rig.local.push_back(scales.s.row(m.bone).transpose().cwiseProduct(markers.offset(k, beta)) + scales.delta[k]);
    rig.weight.push_back(m.weight);
  }
  return rig;
}

Eigen::VectorXd pose_to_vector(const Pose& pose) {
  Eigen::VectorXd x(pose.q.size() + 3);
  x << pose.q, pose.trans;
  return x;
}

Pose pose_from_vector(const Eigen::VectorXd& x, int dofs) {
  if (x.size() != dofs + 3) fail(ErrorCode::DimensionMismatch, "pose vector has the wrong size");
  return Pose{x.head(dofs), x.tail<3>()};
}

void pose_bounds(const KinematicTree& tree, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  const int n = tree.dof_count();
  lo = Eigen::VectorXd::Constant(n + 3, -1e6);
  hi = Eigen::VectorXd::Constant(n + 3, 1e6);
  const auto limits = tree.dof_limits();
  for (int d = 0; d < n; ++d) {
    lo[d] = limits[d].lo;
    hi[d] = limits[d].hi;
  }
}

Points rig_markers(const MarkerRig& rig, const Pose& pose) {
  const FkResult<double> fk = forward_kinematics(*rig.tree, pose, rig.placement);
  Points out(rig.markers(), 3);
  for (int k = 0; k < rig.markers(); ++k) out.row(k) = (fk.skel[rig.bone[k]] * rig.local[k]).transpose();
  return out;
}

namespace {

void fill_jacobian(const MarkerRig& rig, const Pose& pose, const FkResult<double>& fk, const Points& x,
                   Eigen::MatrixXd& J) {
  const KinematicTree& tree = *rig.tree;
  const std::vector<Twist> tw = dof_twists(tree, pose, rig.placement, fk);
  const int n = tree.dof_count();
  J.setZero(3 * rig.markers(), n + 3);
  for (int k = 0; k < rig.markers(); ++k) {
    const Vec3 p = x.row(k).transpose();
    for (int j : tree.chain(rig.bone[k])) {
      const JointSpec& s = tree.joint(j);
      for (int d = 0; d < s.dofs(); ++d) J.block<3, 1>(3 * k, s.dof_offset + d) = tw[s.dof_offset + d].apply(p);
    }
    J.block<3, 3>(3 * k, n).setIdentity();
  }
}

class IkProblem : public LeastSquaresProblem {
 public:
  IkProblem(const MarkerRig& rig, const Points& targets) : rig_(rig), targets_(targets) {}
  int size() const override { return rig_.variables(); }

  double energy(const Eigen::VectorXd& v) const override {
    const Points x = rig_markers(rig_, pose_from_vector(v, rig_.tree->dof_count()));
    double E = 0;
    for (int k = 0; k < rig_.markers(); ++k) E += rig_.weight[k] * (x.row(k) - targets_.row(k)).squaredNorm();
    return E;
  }

  double linearize(const Eigen::VectorXd& v, Eigen::MatrixXd& H, Eigen::VectorXd& g) const override {
    const Pose pose = pose_from_vector(v, rig_.tree->dof_count());
    const FkResult<double> fk = forward_kinematics(*rig_.tree, pose, rig_.placement);
    Points x(rig_.markers(), 3);
    for (int k = 0; k < rig_.markers(); ++k) x.row(k) = (fk.skel[rig_.bone[k]] * rig_.local[k]).transpose();
    Eigen::MatrixXd J;
    fill_jacobian(rig_, pose, fk, x, J);
    Eigen::VectorXd r(3 * rig_.markers()), w(3 * rig_.markers());
    double E = 0;
    for (int k = 0; k < rig_.markers(); ++k) {
      r.segment<3>(3 * k) = (x.row(k) - targets_.row(k)).transpose();
      w.segment<3>(3 * k).setConstant(rig_.weight[k]);
      E += rig_.weight[k] * r.segment<3>(3 * k).squaredNorm();
    }
    H = J.transpose() * w.asDiagonal() * J;
    g = J.transpose() * w.cwiseProduct(r);
    return E;
  }

 private:
  const MarkerRig& rig_;
  const Points& targets_;
};

}  // namespace

Eigen::MatrixXd marker_jacobian(const MarkerRig& rig, const Pose& pose) {
  const FkResult<double> fk = forward_kinematics(*rig.tree, pose, rig.placement);
  Points x(rig.markers(), 3);
  for (int k = 0; k < rig.markers(); ++k) x.row(k) = (fk.skel[rig.bone[k]] * rig.local[k]).transpose();
  Eigen::MatrixXd J;
  fill_jacobian(rig, pose, fk, x, J);
  return J;
}

Pose align_root(const MarkerRig& rig, const Points& targets, const Pose& pose) {
  std::vector<int> idx;
  for (int k = 0; k < rig.markers(); ++k) {
    if (rig.bone[k] == 0) idx.push_back(k);
  }
  if (idx.size() < 3) fail(ErrorCode::InsufficientData, "need three root markers to align the root");
  Pose zero = Pose::zero(rig.tree->dof_count());
  const Points x0 = rig_markers(rig, zero);
  Points a(idx.size(), 3), b(idx.size(), 3);
  for (size_t i = 0; i < idx.size(); ++i) {
    a.row(i) = x0.row(idx[i]);
    b.row(i) = targets.row(idx[i]);
  }
  const RigidTransform T = kabsch(a, b);
  // posed root: x' = T(J0) R0 L T(J0)^-1 x with L = (Rq, R0' trans)
  const Mat3 R0 = rig.placement.rotation[0];
  const Vec3 J0 = rig.placement.joint[0];
  const Mat3 Rq = R0.transpose() * T.R * R0;
  Pose out = pose;
  out.q.head<3>() = rotation_to_euler_xzy(Rq);
  out.trans = T.t + T.R * J0 - J0;
  return out;
}

IkResult ik_solve_frame(const MarkerRig& rig, const Points& targets, const Pose& init, const LmOptions& options) {
  if (targets.rows() != rig.markers()) fail(ErrorCode::ModelMarkerMismatch, "target count does not match the markers");
  if (!targets.allFinite()) fail(ErrorCode::DegenerateInput, "targets must be finite");
  IkProblem problem(rig, targets);
  Eigen::VectorXd lo, hi;
  pose_bounds(*rig.tree, lo, hi);
  const LmResult r = lm_minimize(problem, pose_to_vector(init), lo, hi, options);
  IkResult out;
  out.pose = pose_from_vector(r.x, rig.tree->dof_count());
  out.energy = r.energy;
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.accepted_energies = r.accepted_energies;
  return out;
}

}  // namespace skelrig
