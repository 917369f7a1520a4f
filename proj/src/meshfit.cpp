#include "skelrig/meshfit.hpp"

#include <algorithm>

#include "skelrig/ik.hpp"

namespace skelrig {

double MeshFitResult::mean_v2v() const {
  double s = 0;
  for (const auto& f : frames) s += f.mean_v2v;
  return frames.empty() ? 0 : s / frames.size();
}

double MeshFitResult::mean_max_v2v() const {
  double s = 0;
  for (const auto& f : frames) s += f.max_v2v;
  return frames.empty() ? 0 : s / frames.size();
}

MeshFitFrame vertex_distance(const Points& a, const Points& b) {
  if (a.rows() != b.rows()) fail(ErrorCode::TopologyMismatch, "vertex counts differ");
  MeshFitFrame f;
  for (Eigen::Index v = 0; v < a.rows(); ++v) {
    const double d = (a.row(v) - b.row(v)).norm();
    f.mean_v2v += d;
    f.max_v2v = std::max(f.max_v2v, d);
  }
  if (a.rows()) f.mean_v2v /= a.rows();
  return f;
}

Eigen::MatrixXd skin_jacobian(const SkelModel& model, const SkelShape& shape, const Pose& pose) {
  const KinematicTree& tree = model.tree;
  const Placement& pl = shape.placement.frames;
  const FkResult<double> fk = forward_kinematics(tree, pose, pl);
  const std::vector<Twist> tw = dof_twists(tree, pose, pl, fk);
  const int n = tree.dof_count();
  const Eigen::Index N = shape.shaped.rows();
  Points rest = shape.shaped;
  for (const auto& [dof, field] : model.correctives.per_dof) rest += pose.q[dof] * field;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3 * N, n + 3);
  for (Eigen::Index v = 0; v < N; ++v) {
    const Vec3 x = rest.row(v).transpose();
    for (SparseRows::InnerIterator it(model.skin_weights, v); it; ++it) {
      const int i = static_cast<int>(it.col());
      const Vec3 p = fk.skin[i] * x;
      for (int j : tree.chain(i)) {
        const JointSpec& s = tree.joint(j);
        for (int d = 0; d < s.dofs(); ++d) J.block<3, 1>(3 * v, s.dof_offset + d) += it.value() * tw[s.dof_offset + d].apply(p);
      }
      for (const auto& [dof, field] : model.correctives.per_dof) {
        J.block<3, 1>(3 * v, dof) += it.value() * (fk.skin[i].R * field.row(v).transpose());
      }
    }
    J.block<3, 3>(3 * v, n).setIdentity();
  }
  return J;
}

namespace {

class MeshProblem : public LeastSquaresProblem {
 public:
  MeshProblem(const SkelModel& model, const SkelShape& shape, const Points& target)
      : model_(model), shape_(shape), target_(target) {}
  int size() const override { return model_.tree.dof_count() + 3; }

  double energy(const Eigen::VectorXd& x) const override {
    const Pose pose = pose_from_vector(x, model_.tree.dof_count());
    const FkResult<double> fk = forward_kinematics(model_.tree, pose, shape_.placement.frames);
    return (skel_skin_vertices(model_, shape_, pose, fk) - target_).squaredNorm() / target_.rows();
  }

  double linearize(const Eigen::VectorXd& x, Eigen::MatrixXd& H, Eigen::VectorXd& g) const override {
    const Pose pose = pose_from_vector(x, model_.tree.dof_count());
    const FkResult<double> fk = forward_kinematics(model_.tree, pose, shape_.placement.frames);
    const Points v = skel_skin_vertices(model_, shape_, pose, fk);
    const Eigen::MatrixXd J = skin_jacobian(model_, shape_, pose);
    Eigen::VectorXd r(3 * v.rows());
    for (Eigen::Index i = 0; i < v.rows(); ++i) r.segment<3>(3 * i) = (v.row(i) - target_.row(i)).transpose();
    const double w = 1.0 / target_.rows();
    H.noalias() = w * J.transpose() * J;
    g.noalias() = w * J.transpose() * r;
    return w * r.squaredNorm();
  }

 private:
  const SkelModel& model_;
  const SkelShape& shape_;
  const Points& target_;
};

}  // namespace

Pose align_root_to_mesh(const SkelModel& model, const SkelShape& shape, const Points& target) {
  std::vector<int> idx;
  for (Eigen::Index v = 0; v < model.skin_weights.rows(); ++v) {
    for (SparseRows::InnerIterator it(model.skin_weights, v); it; ++it) {
      if (it.col() == 0 && it.value() >= 1.0 - 1e-12) idx.push_back(static_cast<int>(v));
    }
  }
  if (idx.size() < 3) fail(ErrorCode::InsufficientData, "root owns fewer than three vertices");
  Points a(idx.size(), 3), b(idx.size(), 3);
  for (size_t i = 0; i < idx.size(); ++i) {
    a.row(i) = shape.shaped.row(idx[i]);
    b.row(i) = target.row(idx[i]);
  }
  const RigidTransform T = kabsch(a, b);
  const Mat3 R0 = shape.placement.frames.rotation[0];
  const Vec3 J0 = shape.placement.frames.joint[0];
  Pose out = Pose::zero(model.tree.dof_count());
  out.q.head<3>() = rotation_to_euler_xzy(R0.transpose() * T.R * R0);
  out.trans = T.t + T.R * J0 - J0;
  return out;
}

MeshFitResult fit_skel_to_mesh(const SkelModel& model, const Eigen::VectorXd& beta, const std::vector<Points>& targets,
                               const LmOptions& options, const Pose* init) {
  const SkelShape shape = prepare_shape(model, beta);
  for (const auto& t : targets) {
    if (t.rows() != model.skin.vertex_count()) fail(ErrorCode::TopologyMismatch, "target vertex count differs from the skin");
  }
  Eigen::VectorXd lo, hi;
  pose_bounds(model.tree, lo, hi);
  MeshFitResult out;
  Pose prev;
  for (size_t f = 0; f < targets.size(); ++f) {
    if (f == 0) prev = init ? *init : align_root_to_mesh(model, shape, targets[0]);
    MeshProblem problem(model, shape, targets[f]);
    const LmResult r = lm_minimize(problem, pose_to_vector(prev), lo, hi, options);
    const Pose pose = pose_from_vector(r.x, model.tree.dof_count());
    const FkResult<double> fk = forward_kinematics(model.tree, pose, shape.placement.frames);
    MeshFitFrame fr = vertex_distance(skel_skin_vertices(model, shape, pose, fk), targets[f]);
    fr.iterations = r.iterations;
    fr.converged = r.converged;
    out.frames.push_back(fr);
    out.poses.push_back(pose);
    prev = pose;
  }
  return out;
}

}  // namespace skelrig
