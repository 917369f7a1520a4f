#include <doctest.h>

#include <thread>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "skelrig/skelmodel.hpp"

using namespace skelrig;

namespace {

int bone_mesh_start(const SkelModel& m, int bone) {
  int start = 0;
  for (int b = 0; b < bone; ++b) start += m.bone_meshes[b].vertex_count();
  return start;
}

}  // namespace

TEST_CASE("scale factors") {
  const SkelModel& m = fixture::model();
  const EnvelopeModel& env = fixture::envelope();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m.shape_dims());
  const SkelShape s0 = prepare_shape(m, zero);
  for (double s : s0.bone_scale) {
    CHECK(s >= 0.95);
    CHECK(s <= 1.05);
  }
  Eigen::VectorXd legs = zero;
  legs[0] = 2.0;
  const SkelShape s1 = prepare_shape(m, legs);
  const int femur = m.tree.find("femur_l");
  CHECK(s1.bone_scale[femur] / s0.bone_scale[femur] == doctest::Approx(true_scales(env, legs)(femur, 1)).epsilon(0.01));
  CHECK(prepare_shape(m, legs).bone_scale == s1.bone_scale);
  CHECK_THROWS_AS(prepare_shape(m, Eigen::VectorXd::Zero(2)), Error);

  TPosePlacement bad;
  bad.rest_segment = {Vec3::Zero()};
  bad.target_segment = {Vec3::UnitY()};
  CHECK_THROWS_AS(bone_scale_factors(bad), Error);
}

TEST_CASE("zero pose collapses to the shaped template") {
  const SkelModel& m = fixture::model();
  const Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(m.shape_dims(), 0.5, -0.5);
  const SkelShape shape = prepare_shape(m, beta);
  const SkelOutput out = skel_forward(m, shape, Pose::zero(m.tree.dof_count()));
  CHECK((out.skin.vertices - shape.shaped).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.skeleton.vertices - shape.skeleton_rest).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(out.warnings.empty());
  CHECK(out.skin.faces == m.skin.faces);
  CHECK(out.skeleton.faces.rows() == m.skeleton_faces().rows());
  const Points J = regress_joints(m.regressor, shape.shaped);
  CHECK((out.joints - J).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("root rotation moves everything rigidly") {
  const SkelModel& m = fixture::model();
  const Eigen::VectorXd beta = Eigen::VectorXd::Zero(m.shape_dims());
  const SkelShape shape = prepare_shape(m, beta);
  std::mt19937_64 rng(50);
  Pose base = oracle::random_pose(m.tree, rng, 0.6);
  base.q.head<3>().setZero();
  base.trans.setZero();
  Pose turned = base;
  turned.q.head<3>() = Vec3(0.4, -0.3, 1.2);
  const SkelOutput a = skel_forward(m, shape, base), b = skel_forward(m, shape, turned);
  const Mat3 R0 = shape.placement.frames.rotation[0];
  const Vec3 c = shape.placement.frames.joint[0];
  const Mat3 R = R0 * euler_xzy_to_rotation(Vec3(0.4, -0.3, 1.2)).matrix() * R0.transpose();
  auto rotated = [&](const Points& p) -> Points { return Points((p.rowwise() - c.transpose()) * R.transpose()).rowwise() + c.transpose(); };
  CHECK((rotated(a.skin.vertices) - b.skin.vertices).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rotated(a.skeleton.vertices) - b.skeleton.vertices).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rotated(a.joints) - b.joints).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("elbow flexion rotates the forearm about the elbow") {
  const SkelModel& m = fixture::model();
  const SkelShape shape = prepare_shape(m, Eigen::VectorXd::Zero(m.shape_dims()));
  const int ulna = m.tree.find("ulna_r");
  Pose pose = Pose::zero(m.tree.dof_count());
  pose.q[m.tree.joint(ulna).dof_offset] = kPi / 2;
  const SkelOutput out = skel_forward(m, shape, pose);

  const Mat3 Ru = shape.placement.frames.rotation[ulna];
  const Vec3 e = shape.placement.frames.joint[ulna];
  const Mat3 R = Ru * Eigen::AngleAxisd(kPi / 2, m.tree.joint(ulna).axis.normalized()).toRotationMatrix() * Ru.transpose();
  auto about_elbow = [&](const Vec3& x) { return Vec3(R * (x - e) + e); };

  std::vector<int> forearm;
  for (int b = 0; b < m.bones(); ++b) {
    if (m.tree.is_ancestor_or_self(ulna, b)) forearm.push_back(b);
  }
  int checked = 0;
  for (Eigen::Index v = 0; v < m.skin_weights.rows(); ++v) {
    double w = 0;
    for (SparseRows::InnerIterator it(m.skin_weights, v); it; ++it) {
      if (std::find(forearm.begin(), forearm.end(), static_cast<int>(it.col())) != forearm.end()) w += it.value();
    }
    if (w != 1.0) continue;
    ++checked;
    CHECK((out.skin.vertices.row(v).transpose() - about_elbow(shape.shaped.row(v).transpose())).norm() < 1e-12);
  }
  CHECK(checked > 10);
  for (int b : forearm) {
    const int start = bone_mesh_start(m, b);
    for (int v = 0; v < m.bone_meshes[b].vertex_count(); ++v) {
      CHECK((out.skeleton.vertices.row(start + v).transpose() - about_elbow(shape.skeleton_rest.row(start + v).transpose()))
                .norm() < 1e-12);
    }
  }
}

TEST_CASE("angle limit policy") {
  SkelModel m = fixture::model();
  Pose pose = Pose::zero(m.tree.dof_count());
  const int knee = m.tree.joint(m.tree.find("tibia_l")).dof_offset;
  pose.q[knee] = -0.4;
  const SkelOutput out = skel_forward(m, Eigen::VectorXd::Zero(m.shape_dims()), pose);
  CHECK(out.warnings.size() == 1);
  Pose clamped = pose;
  CHECK(apply_limits(m, clamped).size() == 1);
  CHECK(clamped.q[knee] == 0);
  m.limit_policy = AngleLimitPolicy::Error;
  CHECK_THROWS_AS(skel_forward(m, Eigen::VectorXd::Zero(m.shape_dims()), pose), Error);
  Pose wrong = Pose::zero(3);
  CHECK_THROWS_AS(apply_limits(m, wrong), Error);
}

TEST_CASE("dof table") {
  const std::vector<DofRow> rows = joint_ranges_report(fixture::model());
  CHECK(rows.size() == 46);
  int scapula = 0;
  for (const DofRow& r : rows) {
    if (r.name.rfind("knee", 0) == 0) CHECK(r.kind == JointKind::Hinge1);
    if (r.joint.rfind("scapula", 0) == 0) {
      CHECK(r.kind == JointKind::Scapula3);
      ++scapula;
    }
  }
  CHECK(scapula == 6);
}

TEST_CASE("evaluator caches the shape") {
  auto model = std::make_shared<const SkelModel>(fixture::model());
  SkelEvaluator eval(model);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(model->shape_dims(), 0.3);
  const auto a = eval.shape(beta), b = eval.shape(beta);
  CHECK(a.get() == b.get());
  std::vector<std::thread> pool;
  std::vector<Points> results(4);
  for (int i = 0; i < 4; ++i) {
    pool.emplace_back([&, i] { results[i] = eval.forward(beta, Pose::zero(model->tree.dof_count())).skin.vertices; });
  }
  for (auto& t : pool) t.join();
  for (int i = 1; i < 4; ++i) CHECK(results[i] == results[0]);
}
