#include "skelrig/skelmodel.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace skelrig {

int SkelModel::skeleton_vertex_count() const {
  int n = 0;
  for (const auto& m : bone_meshes) n += m.vertex_count();
  return n;
}

Faces SkelModel::skeleton_faces() const {
  int nf = 0;
  for (const auto& m : bone_meshes) nf += m.face_count();
  Faces f(nf, 3);
  int row = 0, base = 0;
  for (const auto& m : bone_meshes) {
    for (int i = 0; i < m.face_count(); ++i) f.row(row++) = m.faces.row(i).array() + base;
    base += m.vertex_count();
  }
  return f;
}

std::vector<double> bone_scale_factors(const TPosePlacement& placement) {
  std::vector<double> s(placement.rest_segment.size());
  for (size_t i = 0; i < s.size(); ++i) {
    const double rest = placement.rest_segment[i].norm();
    if (rest <= tolerance::kSegmentLength) fail(ErrorCode::ZeroSegment, "rest segment shorter than 1e-6 m");
    s[i] = placement.target_segment[i].norm() / rest;
  }
  return s;
}

SkelShape prepare_shape(const SkelModel& model, const Eigen::VectorXd& beta) {
  if (beta.size() != model.shape_dims()) fail(ErrorCode::DimensionMismatch, "beta size does not match the shape basis");
  SkelShape s;
  s.beta = beta;
  const Eigen::Index N = model.skin.vertex_count();
  const Eigen::VectorXd flat = model.shape_basis * beta;
  s.shaped = model.skin.vertices + Eigen::Map<const Points>(flat.data(), N, 3);
  s.placement = build_placement(model.tree, model.segments, model.regressor, s.shaped, model.base_rotation);
  s.bone_scale = bone_scale_factors(s.placement);
  const Placement& pl = s.placement.frames;
  s.skeleton_rest.resize(model.skeleton_vertex_count(), 3);
  int row = 0;
  for (int b = 0; b < model.bones(); ++b) {
    const Vec3 u = model.segments[b].rest_local.normalized();
    const double k = s.bone_scale[b] - 1.0;
    const Mesh& m = model.bone_meshes[b];
    for (int v = 0; v < m.vertex_count(); ++v) {
      const Vec3 x = m.vertices.row(v).transpose();
      const Vec3 scaled = x + k * u.dot(x) * u;
      s.skeleton_rest.row(row++) = (pl.joint[b] + pl.rotation[b] * scaled).transpose();
    }
  }
  s.skeleton_local.reserve(static_cast<size_t>(model.skeleton_weights.nonZeros()));
  for (Eigen::Index v = 0; v < model.skeleton_weights.rows(); ++v) {
    const Vec3 X = s.skeleton_rest.row(v).transpose();
    for (SparseRows::InnerIterator it(model.skeleton_weights, v); it; ++it) {
      const int k = static_cast<int>(it.col());
      s.skeleton_local.push_back(pl.rotation[k].transpose() * (X - pl.joint[k]));
    }
  }
  return s;
}

std::vector<std::string> apply_limits(const SkelModel& model, Pose& pose) {
  std::vector<std::string> warnings;
  if (pose.q.size() != model.tree.dof_count()) fail(ErrorCode::DimensionMismatch, "pose must have one entry per DOF");
  for (const auto& j : model.tree.joints()) {
    for (int d = 0; d < j.dofs(); ++d) {
      double& x = pose.q[j.dof_offset + d];
      if (x >= j.limits[d].lo && x <= j.limits[d].hi) continue;
      if (model.limit_policy == AngleLimitPolicy::Error) {
        fail(ErrorCode::AngleLimit, fmt::format("{} = {} outside [{}, {}]", j.dof_names[d], x, j.limits[d].lo, j.limits[d].hi));
      }
      warnings.push_back(fmt::format("clamped {} from {}", j.dof_names[d], x));
      x = std::clamp(x, j.limits[d].lo, j.limits[d].hi);
    }
  }
  return warnings;
}

Points skel_skin_vertices(const SkelModel& model, const SkelShape& shape, const Pose& pose, const FkResult<double>& fk) {
  const Eigen::Index N = shape.shaped.rows();
  Points rest = shape.shaped;
  for (const auto& [dof, field] : model.correctives.per_dof) rest += pose.q[dof] * field;
  Points out(N, 3);
  for (Eigen::Index v = 0; v < N; ++v) {
    const Vec3 x = rest.row(v).transpose();
    Vec3 acc = Vec3::Zero();
    for (SparseRows::InnerIterator it(model.skin_weights, v); it; ++it) acc += it.value() * (fk.skin[it.col()] * x);
    out.row(v) = acc.transpose();
  }
  return out;
}

SkelOutput skel_forward(const SkelModel& model, const SkelShape& shape, const Pose& input) {
  Pose pose = input;
  SkelOutput out;
  out.warnings = apply_limits(model, pose);
  const FkResult<double> fk = forward_kinematics(model.tree, pose, shape.placement.frames);
  out.skin.vertices = skel_skin_vertices(model, shape, pose, fk);
  out.skin.faces = model.skin.faces;
  out.joints.resize(model.bones(), 3);
  for (int i = 0; i < model.bones(); ++i) out.joints.row(i) = (fk.skin[i] * shape.placement.frames.joint[i]).transpose();
  out.skeleton.vertices.resize(shape.skeleton_rest.rows(), 3);
  size_t nz = 0;
  for (Eigen::Index v = 0; v < model.skeleton_weights.rows(); ++v) {
    Vec3 acc = Vec3::Zero();
    for (SparseRows::InnerIterator it(model.skeleton_weights, v); it; ++it) {
      acc += it.value() * (fk.skel[it.col()] * shape.skeleton_local[nz++]);
    }
    out.skeleton.vertices.row(v) = acc.transpose();
  }
  out.skeleton.faces = model.skeleton_faces();
  return out;
}

SkelOutput skel_forward(const SkelModel& model, const Eigen::VectorXd& beta, const Pose& pose) {
  return skel_forward(model, prepare_shape(model, beta), pose);
}

std::vector<DofRow> joint_ranges_report(const SkelModel& model) {
  std::vector<DofRow> rows;
  for (const auto& j : model.tree.joints()) {
    for (int d = 0; d < j.dofs(); ++d) {
      rows.push_back({j.dof_offset + d, j.dof_names[d], j.name, j.kind, j.limits[d].lo, j.limits[d].hi});
    }
  }
  return rows;
}

SkelModel assemble_skel_model(const EnvelopeModel& envelope, const SkeletonTemplate& skeleton,
                              const JointRegressor& regressor, const std::vector<Rotation>& base) {
  const KinematicTree& src = skeleton.tree;
  require_full_body_layout(src);
  if (regressor.joints() != src.size() || regressor.vertices() != envelope.mesh.vertex_count()) {
    fail(ErrorCode::DimensionMismatch, "regressor does not match the envelope / tree");
  }
  if (static_cast<int>(base.size()) != src.size()) fail(ErrorCode::DimensionMismatch, "one base rotation per bone");
  SkelModel m;
  m.skin = envelope.mesh;
  m.shape_basis = envelope.shape_basis;
  m.envelope_part_to_joint = envelope.part_to_bone;
  std::vector<Eigen::Triplet<double>> wt;
  for (Eigen::Index v = 0; v < envelope.weights.rows(); ++v) {
    for (SparseRows::InnerIterator it(envelope.weights, v); it; ++it) {
      wt.emplace_back(static_cast<int>(v), envelope.part_to_bone[it.col()], it.value());
    }
  }
  m.skin_weights.resize(envelope.weights.rows(), src.size());
  m.skin_weights.setFromTriplets(wt.begin(), wt.end());

  m.tree = src;
  m.regressor = regressor;
  m.base_rotation = base;
  m.segments = skeleton.segments;
  m.bone_meshes = skeleton.bone_meshes;
  // bone meshes are stored as 32-bit floats in the model file
  for (Mesh& mesh : m.bone_meshes) mesh.vertices = mesh.vertices.cast<float>().cast<double>();
  m.markers = envelope.markers;

  std::vector<Eigen::Triplet<double>> st;
  int row = 0;
  for (int b = 0; b < m.bones(); ++b) {
    const JointSpec& j = m.tree.joint(b);
    const Vec3 seg = m.segments[b].rest_local;
    const Mesh& mesh = m.bone_meshes[b];
    for (int v = 0; v < mesh.vertex_count(); ++v, ++row) {
      if (j.kind == JointKind::SpineCC3 && j.parent >= 0) {
        const double t = std::clamp(seg.dot(mesh.vertices.row(v).transpose()) / seg.squaredNorm(), 0.0, 1.0);
        if (t > 0) st.emplace_back(row, b, t);
        if (t < 1) st.emplace_back(row, j.parent, 1.0 - t);
      } else {
        st.emplace_back(row, b, 1.0);
      }
    }
  }
  m.skeleton_weights.resize(row, m.bones());
  m.skeleton_weights.setFromTriplets(st.begin(), st.end());
  return m;
}

std::shared_ptr<const SkelShape> SkelEvaluator::shape(const Eigen::VectorXd& beta) const {
  {
    std::shared_lock lock(mutex_);
    if (cached_ && cached_->beta.size() == beta.size() && cached_->beta == beta) return cached_;
  }
  auto fresh = std::make_shared<const SkelShape>(prepare_shape(*model_, beta));
  std::unique_lock lock(mutex_);
  cached_ = fresh;
  return fresh;
}

SkelOutput SkelEvaluator::forward(const Eigen::VectorXd& beta, const Pose& pose) const {
  return skel_forward(*model_, *shape(beta), pose);
}

}  // namespace skelrig
