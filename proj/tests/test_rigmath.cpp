#include <doctest.h>

#include "oracles.hpp"
#include "skelrig/error.hpp"
#include "skelrig/rigmath.hpp"

using namespace skelrig;

TEST_CASE("euler xzy: identity, axis case and product oracle") {
  CHECK(euler_xzy_to_rotation(Vec3::Zero()).matrix().isIdentity(0));
  const Mat3 R = euler_xzy_to_rotation(Vec3(kPi / 2, 0, 0)).matrix();
  CHECK((R * Vec3::UnitY() - Vec3::UnitZ()).norm() < 1e-15);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int i = 0; i < 200; ++i) {
    const Vec3 q(u(rng), u(rng), u(rng));
    const Mat3 ref = oracle::rx(q[0]) * oracle::rz(q[1]) * oracle::ry(q[2]);
    CHECK((euler_xzy_to_rotation(q).matrix() - ref).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("euler xzy is Lipschitz with constant at most 3") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-kPi, kPi), d(-1e-3, 1e-3);
  for (int i = 0; i < 500; ++i) {
    const Vec3 q(u(rng), u(rng), u(rng));
    const Vec3 dq(d(rng), d(rng), d(rng));
    const double diff = (euler_xzy_to_rotation(q).matrix() - euler_xzy_to_rotation(q + dq).matrix()).norm();
    CHECK(diff <= 3 * dq.norm() + 1e-15);
  }
}

TEST_CASE("euler xzy inverse round trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3), m(-1.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 q(u(rng), m(rng), u(rng));
    const Mat3 R = euler_xzy_to_rotation(q).matrix();
    CHECK((euler_xzy_to_rotation(rotation_to_euler_xzy(R)).matrix() - R).norm() < 1e-12);
  }
}

TEST_CASE("rotation_between") {
  CHECK(rotation_between(Vec3::UnitX(), Vec3::UnitX()).rotation.matrix().isIdentity(1e-15));
  const AlignedRotation q = rotation_between(Vec3::UnitX(), Vec3::UnitY());
  CHECK((q.rotation.matrix() - Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()).toRotationMatrix()).norm() < 1e-14);
  CHECK_FALSE(q.antiparallel);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 500; ++i) {
    const Vec3 a = Vec3(g(rng), g(rng), g(rng)).normalized(), b = Vec3(g(rng), g(rng), g(rng)).normalized();
    const Mat3 R = rotation_between(a, b).rotation.matrix();
    CHECK((R * a - b).norm() < 1e-10);
    CHECK(is_rotation(R));
    const Vec3 axis = rotation_log(R).normalized();
    CHECK(std::abs(axis.dot(a)) < 1e-8);
    CHECK(std::abs(axis.dot(b)) < 1e-8);
    const Mat3 back = rotation_between(b, a).rotation.matrix();
    CHECK((back * R - Mat3::Identity()).norm() < 1e-9);
  }
}

TEST_CASE("rotation_between antiparallel tie-break is deterministic") {
  const Vec3 a = Vec3(0.1, -0.9, 0.2).normalized();
  const AlignedRotation r1 = rotation_between(a, -a), r2 = rotation_between(a, -a);
  CHECK(r1.antiparallel);
  CHECK(r1.rotation.matrix() == r2.rotation.matrix());
  CHECK((r1.rotation * a + a).norm() < 1e-12);
  // least aligned canonical axis with a is x, so the axis is normalize(a x e_x)
  const Vec3 axis = rotation_log(r1.rotation.matrix()).normalized();
  CHECK(std::abs(std::abs(axis.dot(a.cross(Vec3::UnitX()).normalized())) - 1) < 1e-9);
}

TEST_CASE("project_to_rotation") {
  std::mt19937_64 rng(5);
  const Mat3 R = oracle::random_rotation(rng);
  CHECK((project_to_rotation(R).matrix() - R).norm() < 1e-12);
  CHECK((project_to_rotation(2 * R).matrix() - R).norm() < 1e-12);
  const Mat3 D = Eigen::Vector3d(0.5, 2.0, 3.0).asDiagonal();
  CHECK((project_to_rotation(R * D).matrix() - R).norm() < 1e-12);

  std::normal_distribution<double> g(0, 1);
  Mat3 M;
  for (int i = 0; i < 9; ++i) M(i / 3, i % 3) = g(rng);
  const Mat3 P = project_to_rotation(M).matrix();
  CHECK(is_rotation(P));
  const double best = (P.transpose() * M).trace();
  for (int i = 0; i < 10000; ++i) CHECK((oracle::random_rotation(rng).transpose() * M).trace() <= best + 1e-12);

  Mat3 degenerate = Mat3::Zero();
  degenerate(0, 0) = 1;
  CHECK_THROWS_AS(project_to_rotation(degenerate), Error);
}

TEST_CASE("rotation and transform invariants") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform T(oracle::random_rotation(rng), Vec3::Random());
    const RigidTransform I = T * T.inverse();
    CHECK((I.R - Mat3::Identity()).norm() < 1e-9);
    CHECK(I.t.norm() < 1e-9);
  }
  CHECK_THROWS_AS(Rotation::from_matrix(2 * Mat3::Identity()), Error);
  const Vec3 w(0.3, -0.2, 1.1);
  CHECK((rotation_log(rotation_exp(w)) - w).norm() < 1e-12);
}

TEST_CASE("kabsch recovers a rigid transform") {
  std::mt19937_64 rng(7);
  Points a = Points::Random(20, 3);
  const RigidTransform T(oracle::random_rotation(rng), Vec3(0.3, -1, 2));
  Points b(20, 3);
  for (int i = 0; i < 20; ++i) b.row(i) = (T * Vec3(a.row(i).transpose())).transpose();
  const RigidTransform K = kabsch(a, b);
  CHECK((K.R - T.R).norm() < 1e-12);
  CHECK((K.t - T.t).norm() < 1e-12);
}
