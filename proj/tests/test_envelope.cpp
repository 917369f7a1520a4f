#include <doctest.h>

#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "skelrig/mesh.hpp"

using namespace skelrig;

namespace {

Mesh unit_cube() {
  Mesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) m.vertices.row(i) << (i & 1), (i >> 1) & 1, (i >> 2) & 1;
  m.faces.resize(12, 3);
  m.faces << 0, 2, 1, 1, 2, 3, 4, 5, 6, 5, 7, 6, 0, 1, 4, 1, 5, 4, 2, 6, 3, 3, 6, 7, 0, 4, 2, 2, 4, 6, 1, 3, 5, 3, 7, 5;
  return m;
}

int part_of_bone(const EnvelopeModel& m, const std::string& bone) {
  const int b = m.skeleton.tree.find(bone);
  for (int p = 0; p < m.parts(); ++p) {
    if (m.part_to_bone[p] == b) return p;
  }
  return -1;
}

}  // namespace

TEST_CASE("default envelope") {
  const EnvelopeModel& m = fixture::envelope();
  CHECK(m.mesh.vertex_count() >= 1500);
  CHECK(m.mesh.vertex_count() <= 3000);
  CHECK(m.parts() == 24);
  CHECK(m.markers.size() == 105);
  CHECK(m.markers.count(MarkerClass::Bony) == 57);
  CHECK(m.markers.count(MarkerClass::Soft) == 48);
  CHECK_NOTHROW(validate_mesh(m.mesh));
  CHECK(is_closed_manifold(m.mesh));
  CHECK(enclosed_volume(m.mesh) > 0);
  for (Eigen::Index v = 0; v < m.weights.rows(); ++v) CHECK(std::abs(m.weights.row(v).sum() - 1) < 1e-12);
}

TEST_CASE("bad envelope configs") {
  EnvelopeConfig c;
  c.shape_dims = 0;
  CHECK_THROWS_AS(build_envelope(c), Error);
  c = {};
  c.shape_dims = 9;
  CHECK_THROWS_AS(build_envelope(c), Error);
  c = {};
  c.resolution = -1;
  CHECK_THROWS_AS(build_envelope(c), Error);
}

TEST_CASE("shape space") {
  const EnvelopeModel& m = fixture::envelope();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m.shape_dims());
  CHECK(envelope_shape(m, zero) == m.mesh.vertices);
  CHECK_THROWS_AS(envelope_shape(m, Eigen::VectorXd::Zero(3)), Error);

  Eigen::VectorXd girth = zero;
  girth.tail(4) << 1.5, -2.0, 1.0, 2.5;
  const Points j0 = envelope_joints(m, m.mesh.vertices), j1 = envelope_joints(m, envelope_shape(m, girth));
  for (int p = 0; p < m.parts(); ++p) {
    const int parent = m.part_parent[p];
    if (parent < 0) continue;
    CHECK(std::abs((j0.row(p) - j0.row(parent)).norm() - (j1.row(p) - j1.row(parent)).norm()) < 1e-9);
  }
  CHECK((true_scales(m, girth).array() == 1.0).all());

  Eigen::VectorXd legs = zero;
  legs[0] = 2.0;
  const BoneScales s = true_scales(m, legs);
  CHECK(s(m.skeleton.tree.find("femur_r"), 1) == doctest::Approx(1.1));
  CHECK(s(m.skeleton.tree.find("humerus_r"), 1) == 1.0);
}

TEST_CASE("envelope posing") {
  const EnvelopeModel& m = fixture::envelope();
  const Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(m.shape_dims(), -1, 1);
  const Points shaped = envelope_shape(m, beta);
  const Points joints = envelope_joints(m, shaped);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m.pose_size());
  CHECK((envelope_pose(m, beta, theta).vertices - shaped).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(envelope_pose(m, beta, Eigen::VectorXd::Zero(5)), Error);

  // global rotation about the root joint
  const Vec3 w(0.3, -1.1, 0.4);
  theta.head<3>() = w;
  const Mat3 R = rotation_exp(w);
  const Vec3 c = joints.row(0).transpose();
  const Points posed = envelope_pose(m, beta, theta).vertices;
  for (Eigen::Index v = 0; v < shaped.rows(); ++v) {
    CHECK((posed.row(v).transpose() - (R * (shaped.row(v).transpose() - c) + c)).norm() < 1e-12);
  }

  // single 90 degree knee bend: vertices owned by the shank rotate about the knee
  theta.setZero();
  const int knee = part_of_bone(m, "tibia_l");
  REQUIRE(knee >= 0);
  const Vec3 axis = Vec3::UnitX();
  theta.segment<3>(6 * knee) = kPi / 2 * axis;
  const Mat3 Rk = rotation_exp(kPi / 2 * axis);
  const Vec3 jk = joints.row(knee).transpose();
  const Points bent = envelope_pose(m, beta, theta).vertices;
  int owned = 0;
  for (int k = 0; k < m.weights.outerSize(); ++k) {
    for (SparseRows::InnerIterator it(m.weights, k); it; ++it) {
      if (it.col() == knee && it.value() == 1.0) {
        ++owned;
        CHECK((bent.row(k).transpose() - (Rk * (shaped.row(k).transpose() - jk) + jk)).norm() < 1e-12);
      }
    }
  }
  CHECK(owned > 10);

  // theta from transforms round trip
  std::mt19937_64 rng(20);
  std::vector<RigidTransform> parts;
  for (int p = 0; p < m.parts(); ++p) parts.emplace_back(oracle::random_rotation(rng), Vec3::Random());
  const EnvelopePosed back = envelope_pose_shaped(m, shaped, joints, envelope_theta_from_transforms(m, joints, parts));
  for (int p = 0; p < m.parts(); ++p) {
    CHECK((back.part_transforms[p].R - parts[p].R).norm() < 1e-10);
    CHECK((back.part_transforms[p].t - parts[p].t).norm() < 1e-10);
  }
}

TEST_CASE("markers follow the surface") {
  const EnvelopeModel& m = fixture::envelope();
  const PairedDataset& d = fixture::small_dataset();
  const SubjectData& s = d.subjects[0];
  for (int f = 0; f < 5; ++f) {
    for (int k = 0; k < m.markers.size(); ++k) {
      CHECK(s.markers[f].row(k) == s.vertices[f].row(m.markers.markers[k].vertex));
    }
  }
  // rigid motion of the whole surface moves the markers identically
  const Mat3 R = rotation_exp(Vec3(0.2, 0.5, -0.3));
  const Vec3 t(0.1, 0.2, -0.4);
  const Points moved = (s.vertices[0] * R.transpose()).rowwise() + t.transpose();
  for (int k = 0; k < m.markers.size(); ++k) {
    const Vec3 x = s.markers[0].row(k).transpose();
    CHECK((moved.row(m.markers.markers[k].vertex).transpose() - (R * x + t)).norm() < 1e-12);
  }
}

TEST_CASE("dataset generation") {
  const EnvelopeModel& m = fixture::envelope();
  DatasetConfig c;
  c.subjects = 1;
  c.frames = 30;
  c.seed = 5;
  const PairedDataset a = generate_dataset(m, c), b = generate_dataset(m, c);
  CHECK(a.subjects[0].beta == b.subjects[0].beta);
  for (int f = 0; f < c.frames; ++f) {
    CHECK(a.subjects[0].markers[f] == b.subjects[0].markers[f]);
    CHECK(a.subjects[0].vertices[f] == b.subjects[0].vertices[f]);
    CHECK(a.subjects[0].poses[f].q == b.subjects[0].poses[f].q);
  }
  for (const Pose& p : a.subjects[0].poses) {
    Eigen::VectorXd q = p.q;
    CHECK(clamp_to_limits(m.skeleton.tree, q) == 0);
  }

  c.marker_noise = 0.005;
  c.frames = 60;
  const PairedDataset n = generate_dataset(m, c);
  c.marker_noise = 0;
  const PairedDataset clean = generate_dataset(m, c);
  double sum = 0;
  int count = 0;
  for (int f = 0; f < c.frames; ++f) {
    sum += (n.subjects[0].markers[f] - clean.subjects[0].markers[f]).cwiseAbs().sum();
    count += 3 * m.markers.size();
  }
  const double expected = 0.005 * std::sqrt(2 / kPi);
  CHECK(std::abs(sum / count - expected) < 0.2 * expected);

  c.marker_noise = -1;
  CHECK_THROWS_AS(generate_dataset(m, c), Error);
}

TEST_CASE("mesh utilities") {
  const Mesh cube = unit_cube();
  CHECK(is_closed_manifold(cube));
  CHECK(enclosed_volume(cube) == doctest::Approx(1.0).epsilon(1e-12));
  std::stringstream ss;
  write_obj(ss, cube);
  const Mesh back = read_obj(ss);
  CHECK(back.vertices == cube.vertices);
  CHECK(back.faces == cube.faces);

  Mesh open = cube;
  open.faces.conservativeResize(11, 3);
  CHECK_FALSE(is_closed_manifold(open));
  CHECK_THROWS_AS(enclosed_volume(open), Error);
  Mesh bad = cube;
  bad.faces(0, 0) = 99;
  CHECK_THROWS_AS(validate_mesh(bad), Error);
}
