#include "skelrig/envelope.hpp"

namespace skelrig {

Points envelope_shape(const EnvelopeModel& model, const Eigen::VectorXd& beta) {
  if (beta.size() != model.shape_dims()) fail(ErrorCode::DimensionMismatch, "beta has the wrong number of shape dims");
  const Eigen::Index N = model.mesh.vertex_count();
  const Eigen::VectorXd flat = model.shape_basis * beta;
  return model.mesh.vertices + Eigen::Map<const Points>(flat.data(), N, 3);
}

Points envelope_joints(const EnvelopeModel& model, const Points& shaped) {
  if (shaped.rows() != model.joint_regressor.cols()) fail(ErrorCode::DimensionMismatch, "vertex count mismatch");
  return model.joint_regressor * shaped;
}

EnvelopePosed envelope_pose_shaped(const EnvelopeModel& model, const Points& shaped, const Points& joints,
                                   const Eigen::VectorXd& theta) {
  const int P = model.parts();
  if (theta.size() != 6 * P) fail(ErrorCode::DimensionMismatch, "envelope pose must have 6 numbers per part");
  EnvelopePosed out;
  out.part_transforms.resize(P);
  for (int p = 0; p < P; ++p) {
    const Mat3 R = rotation_exp(theta.segment<3>(6 * p));
    const Vec3 tau = theta.segment<3>(6 * p + 3);
    const Vec3 Jp = joints.row(p).transpose();
    const RigidTransform local(R, tau + Jp - R * Jp);
    const int parent = model.part_parent[p];
    out.part_transforms[p] = parent < 0 ? local : out.part_transforms[parent] * local;
  }
  const Eigen::Index N = shaped.rows();
  out.vertices.resize(N, 3);
  for (Eigen::Index v = 0; v < N; ++v) {
    const Vec3 x = shaped.row(v).transpose();
    Vec3 acc = Vec3::Zero();
    for (SparseRows::InnerIterator it(model.weights, v); it; ++it) acc += it.value() * (out.part_transforms[it.col()] * x);
    out.vertices.row(v) = acc.transpose();
  }
  return out;
}

EnvelopePosed envelope_pose(const EnvelopeModel& model, const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) {
  const Points shaped = envelope_shape(model, beta);
  return envelope_pose_shaped(model, shaped, envelope_joints(model, shaped), theta);
}

Eigen::VectorXd envelope_theta_from_transforms(const EnvelopeModel& model, const Points& joints,
                                               const std::vector<RigidTransform>& part_transforms) {
  const int P = model.parts();
  if (static_cast<int>(part_transforms.size()) != P) fail(ErrorCode::DimensionMismatch, "one transform per part");
  Eigen::VectorXd theta(6 * P);
  for (int p = 0; p < P; ++p) {
    const int parent = model.part_parent[p];
    const RigidTransform local = parent < 0 ? part_transforms[p] : part_transforms[parent].inverse() * part_transforms[p];
    const Vec3 Jp = joints.row(p).transpose();
    theta.segment<3>(6 * p) = rotation_log(local.R);
    theta.segment<3>(6 * p + 3) = local.t - Jp + local.R * Jp;
  }
  return theta;
}

BoneScales true_scales(const EnvelopeModel& model, const Eigen::VectorXd& beta) {
  if (beta.size() != model.scale_basis.cols()) fail(ErrorCode::DimensionMismatch, "beta has the wrong number of shape dims");
  const Eigen::VectorXd flat = model.scale_basis * beta;
  const int nb = model.skeleton.bones();
  BoneScales s = BoneScales::Ones(nb, 3);
  for (int r = 0; r < nb * 3; ++r) s(r / 3, r % 3) += flat[r];
  return s;
}

double mesh_height(const Points& vertices) {
  if (vertices.rows() == 0) return 0.0;
  return vertices.col(1).maxCoeff() - vertices.col(1).minCoeff();
}

}  // namespace skelrig
