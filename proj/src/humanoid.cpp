// Synthetic capsule humanoid: anatomy template, skinned envelope, markers and
// shape space, built so that envelope parts follow skeleton bones exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>

#include <fmt/format.h>

#include "skelrig/envelope.hpp"

namespace skelrig {
namespace {

enum Bone {
  kPelvis, kFemurR, kTibiaR, kTalusR, kCalcnR, kToesR, kFemurL, kTibiaL, kTalusL, kCalcnL, kToesL,
  kLumbar, kThorax, kHead, kScapulaR, kHumerusR, kUlnaR, kRadiusR, kHandR,
  kScapulaL, kHumerusL, kUlnaL, kRadiusL, kHandL, kBoneCount
};

constexpr int kShapeMax = 8;

Vec3 mirror(const Vec3& p) { return {-p.x(), p.y(), p.z()}; }
Vec3 mirror_axis(const Vec3& a) { return {a.x(), -a.y(), -a.z()}; }

struct BoneDraft {
  JointSpec spec;
  Vec3 direction = Vec3::UnitY();
  double roll = 0;
  Vec3 axis_world = Vec3::UnitX();
  Vec3 axis2_world = Vec3::UnitZ();
  int segment_end = -1;  // joint, or -1 for a landmark
};

struct Draft {
  std::vector<BoneDraft> bones;
};

std::vector<DofLimit> full_limits(int n) { return std::vector<DofLimit>(n, DofLimit{}); }

void add_bone(Draft& d, const std::string& name, int parent, JointKind kind, const Vec3& joint,
              std::vector<std::string> dofs, std::vector<DofLimit> limits = {}) {
  BoneDraft b;
  b.spec.name = name;
  b.spec.parent = parent;
  b.spec.kind = kind;
  b.spec.rest_joint = joint;
  b.spec.dof_names = std::move(dofs);
  b.spec.limits = limits.empty() ? full_limits(dof_count(kind)) : std::move(limits);
  d.bones.push_back(std::move(b));
}

Draft anatomy() {
  Draft d;
  const DofLimit bend{0.0, 2.6};
  const DofLimit pro{-kPi / 2, kPi / 2};
  add_bone(d, "pelvis", -1, JointKind::Free6, {0, 0.95, 0}, {"pelvis_tilt", "pelvis_list", "pelvis_rotation"});
  for (int side = 0; side < 2; ++side) {
    const std::string sfx = side == 0 ? "_r" : "_l";
    auto P = [side](Vec3 p) { return side == 0 ? p : mirror(p); };
    const int base = static_cast<int>(d.bones.size());
    add_bone(d, "femur" + sfx, kPelvis, JointKind::Ball3, P({-0.09, 0.90, 0}),
             {"hip_flexion" + sfx, "hip_adduction" + sfx, "hip_rotation" + sfx});
    add_bone(d, "tibia" + sfx, base, JointKind::Hinge1, P({-0.085, 0.50, 0}), {"knee_angle" + sfx}, {bend});
    add_bone(d, "talus" + sfx, base + 1, JointKind::Hinge1, P({-0.085, 0.09, 0}), {"ankle_angle" + sfx});
    add_bone(d, "calcn" + sfx, base + 2, JointKind::Hinge1, P({-0.085, 0.06, -0.02}), {"subtalar_angle" + sfx});
    add_bone(d, "toes" + sfx, base + 3, JointKind::Hinge1, P({-0.085, 0.02, 0.15}), {"mtp_angle" + sfx});
  }
  add_bone(d, "lumbar", kPelvis, JointKind::SpineCC3, {0, 1.05, 0}, {"lumbar_extension", "lumbar_bending", "lumbar_twist"});
  add_bone(d, "thorax", kLumbar, JointKind::SpineCC3, {0, 1.25, 0}, {"thorax_extension", "thorax_bending", "thorax_twist"});
  add_bone(d, "head", kThorax, JointKind::SpineCC3, {0, 1.50, 0}, {"head_extension", "head_bending", "head_twist"});
  for (int side = 0; side < 2; ++side) {
    const std::string sfx = side == 0 ? "_r" : "_l";
    auto P = [side](Vec3 p) { return side == 0 ? p : mirror(p); };
    const int base = static_cast<int>(d.bones.size());
    add_bone(d, "scapula" + sfx, kThorax, JointKind::Scapula3, P({-0.08, 1.40, -0.07}),
             {"scapula_abduction" + sfx, "scapula_elevation" + sfx, "scapula_upward_rot" + sfx});
    add_bone(d, "humerus" + sfx, base, JointKind::Ball3, P({-0.19, 1.42, 0}),
             {"arm_flex" + sfx, "arm_add" + sfx, "arm_rot" + sfx});
    add_bone(d, "ulna" + sfx, base + 1, JointKind::Hinge1, P({-0.47, 1.42, 0}), {"elbow_flexion" + sfx}, {bend});
    add_bone(d, "radius" + sfx, base + 2, JointKind::Pronation1, P({-0.485, 1.42, 0.012}), {"pro_sup" + sfx}, {pro});
    add_bone(d, "hand" + sfx, base + 3, JointKind::Universal2, P({-0.72, 1.42, 0}),
             {"wrist_flexion" + sfx, "wrist_deviation" + sfx});
  }

  auto J = [&](int i) { return d.bones[i].spec.rest_joint; };
  auto dir = [&](int from, int to) { return Vec3((J(to) - J(from)).normalized()); };
  for (int side = 0; side < 2; ++side) {
    const int fem = side == 0 ? kFemurR : kFemurL;
    const int hum = side == 0 ? kHumerusR : kHumerusL;
    const double sgn = side == 0 ? 1.0 : -1.0;
    auto A = [side](Vec3 a) { return side == 0 ? a : mirror_axis(a); };
    d.bones[fem].direction = dir(fem, fem + 1);
    d.bones[fem].roll = 0.1 * sgn;
    d.bones[fem].segment_end = fem + 1;
    d.bones[fem + 1].direction = dir(fem + 1, fem + 2);
    d.bones[fem + 1].roll = -0.15 * sgn;
    d.bones[fem + 1].segment_end = fem + 2;
    d.bones[fem + 1].axis_world = A({1, 0, 0});
    d.bones[fem + 2].direction = dir(fem + 2, fem + 3);
    d.bones[fem + 2].segment_end = fem + 3;
    d.bones[fem + 2].axis_world = A({1, 0, 0});
    d.bones[fem + 3].direction = dir(fem + 3, fem + 4);
    d.bones[fem + 3].segment_end = fem + 4;
    d.bones[fem + 3].axis_world = A(Vec3(0.2, 0.3, 0.9).normalized());
    d.bones[fem + 4].direction = Vec3(0, -0.05, 1).normalized();
    d.bones[fem + 4].axis_world = A({1, 0, 0});

    const int scap = hum - 1;
    d.bones[scap].direction = dir(scap, hum);
    d.bones[scap].segment_end = hum;
    d.bones[hum].direction = dir(hum, hum + 1);
    d.bones[hum].roll = 0.2 * sgn;
    d.bones[hum].segment_end = hum + 1;
    d.bones[hum + 1].direction = dir(hum + 1, hum + 3);
    d.bones[hum + 1].roll = 0.25 * sgn;
    d.bones[hum + 1].segment_end = hum + 3;
    d.bones[hum + 1].axis_world = A({0, 1, 0});
    d.bones[hum + 2].direction = dir(hum + 1, hum + 3);
    d.bones[hum + 2].roll = -0.2 * sgn;
    d.bones[hum + 2].segment_end = hum + 3;
    d.bones[hum + 2].spec.axis_end = hum + 3;
    d.bones[hum + 3].direction = dir(hum + 1, hum + 3);
    d.bones[hum + 3].axis_world = A({0, 0, 1});
    d.bones[hum + 3].axis2_world = A({0, 1, 0});
  }
  d.bones[kPelvis].segment_end = kLumbar;
  d.bones[kLumbar].segment_end = kThorax;
  d.bones[kThorax].segment_end = kHead;
  return d;
}

// ---------------------------------------------------------------------------
// capsule pieces

struct Ctrl {
  double s;
  int part;
};

struct RadiusKnot {
  double s, r1, r2;
};

struct Piece {
  Vec3 a, b, side;
  std::vector<RadiusKnot> radius;
  std::vector<Ctrl> ctrl;
  int segments = 16;
  std::vector<int> girth_parts;  // parts whose girth acts radially about this axis
};

struct VertexInfo {
  int piece = 0;
  double s = 0;
  Vec3 radial = Vec3::Zero();
  std::array<std::pair<int, double>, 2> w{{{0, 0.0}, {0, 0.0}}};
  int nw = 0;
};

struct PieceRings {
  std::vector<std::vector<int>> rings;  // body rings only
  std::vector<double> ring_s;
  int pole_start = -1, pole_end = -1;
};

std::pair<double, double> radius_at(const std::vector<RadiusKnot>& k, double s) {
  if (s <= k.front().s) return {k.front().r1, k.front().r2};
  for (size_t i = 0; i + 1 < k.size(); ++i) {
    if (s <= k[i + 1].s) {
      const double t = (s - k[i].s) / (k[i + 1].s - k[i].s);
      return {k[i].r1 + t * (k[i + 1].r1 - k[i].r1), k[i].r2 + t * (k[i + 1].r2 - k[i].r2)};
    }
  }
  return {k.back().r1, k.back().r2};
}

void blend_weights(const std::vector<Ctrl>& c, double s, VertexInfo& v) {
  auto set1 = [&](int p) {
    v.w[0] = {p, 1.0};
    v.nw = 1;
  };
  if (s <= c.front().s) return set1(c.front().part);
  for (size_t i = 0; i + 1 < c.size(); ++i) {
    if (s < c[i + 1].s) {
      if (c[i].part == c[i + 1].part) return set1(c[i].part);
      const double t = (s - c[i].s) / (c[i + 1].s - c[i].s);
      v.w[0] = {c[i].part, 1.0 - t};
      v.w[1] = {c[i + 1].part, t};
      v.nw = 2;
      return;
    }
  }
  set1(c.back().part);
}

struct Builder {
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  std::vector<VertexInfo> info;

  void band(const std::vector<int>& A, const std::vector<int>& B) {
    // A / B may be a single pole vertex
    const int S = static_cast<int>(std::max(A.size(), B.size()));
    auto at = [](const std::vector<int>& r, int j) { return r.size() == 1 ? r[0] : r[j % r.size()]; };
    for (int j = 0; j < S; ++j) {
      const int a0 = at(A, j), a1 = at(A, j + 1), b0 = at(B, j), b1 = at(B, j + 1);
      if (a0 != a1) faces.emplace_back(a0, a1, b0);
      if (b0 != b1) faces.emplace_back(a1, b1, b0);
    }
  }

  PieceRings add(const Piece& p, int piece_id, double spacing) {
    const Vec3 axis = p.b - p.a;
    const double L = axis.norm();
    const Vec3 u = axis / L;
    const Vec3 e1 = (p.side - p.side.dot(u) * u).normalized();
    const Vec3 e2 = u.cross(e1);
    const int S = p.segments;
    PieceRings pr;
    auto emit = [&](double s, double f1, double f2) {
      std::vector<int> ring;
      for (int j = 0; j < S; ++j) {
        const double phi = 2.0 * kPi * j / S;
        const Vec3 radial = f1 * std::cos(phi) * e1 + f2 * std::sin(phi) * e2;
        VertexInfo vi;
        vi.piece = piece_id;
        vi.s = s;
        vi.radial = radial;
        blend_weights(p.ctrl, s, vi);
        ring.push_back(static_cast<int>(verts.size()));
        verts.push_back(p.a + s * u + radial);
        info.push_back(vi);
      }
      return ring;
    };
    auto pole = [&](double s) {
      VertexInfo vi;
      vi.piece = piece_id;
      vi.s = s;
      blend_weights(p.ctrl, s, vi);
      verts.push_back(p.a + s * u);
      info.push_back(vi);
      return std::vector<int>{static_cast<int>(verts.size()) - 1};
    };
    const auto [r1a, r2a] = radius_at(p.radius, 0.0);
    const auto [r1b, r2b] = radius_at(p.radius, L);
    const double capa = 0.8 * std::min(r1a, r2a), capb = 0.8 * std::min(r1b, r2b);
    const double c60 = 0.5, s60 = std::sqrt(3.0) / 2, c30 = s60, s30 = 0.5;

    std::vector<std::vector<int>> seq;
    seq.push_back(pole(-capa));
    pr.pole_start = seq.back()[0];
    seq.push_back(emit(-capa * s60, r1a * c60, r2a * c60));
    seq.push_back(emit(-capa * s30, r1a * c30, r2a * c30));
    const int n = std::max(2, static_cast<int>(std::ceil(L / spacing)) + 1);
    for (int i = 0; i < n; ++i) {
      const double s = L * i / (n - 1);
      const auto [r1, r2] = radius_at(p.radius, s);
      seq.push_back(emit(s, r1, r2));
      pr.rings.push_back(seq.back());
      pr.ring_s.push_back(s);
    }
    seq.push_back(emit(L + capb * s30, r1b * c30, r2b * c30));
    seq.push_back(emit(L + capb * s60, r1b * c60, r2b * c60));
    seq.push_back(pole(L + capb));
    pr.pole_end = seq.back()[0];
    for (size_t i = 0; i + 1 < seq.size(); ++i) band(seq[i], seq[i + 1]);
    return pr;
  }
};

int nearest_ring(const PieceRings& pr, double s) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(pr.ring_s.size()); ++i) {
    if (std::abs(pr.ring_s[i] - s) < std::abs(pr.ring_s[best] - s)) best = i;
  }
  return best;
}

using ShapeTable = std::array<std::array<double, kShapeMax>, kBoneCount * 3>;
using GirthTable = std::array<std::array<double, kShapeMax>, kBoneCount>;

void shape_tables(ShapeTable& scale, GirthTable& girth) {
  for (auto& r : scale) r.fill(0.0);
  for (auto& r : girth) r.fill(0.0);
  auto sc = [&](int bone, int axis, int dim, double v) { scale[bone * 3 + axis][dim] = v; };
  for (int b : {kFemurR, kTibiaR, kFemurL, kTibiaL}) sc(b, 1, 0, 0.05);
  for (int b : {kHumerusR, kUlnaR, kRadiusR, kHumerusL, kUlnaL, kRadiusL}) sc(b, 1, 1, 0.05);
  for (int b : {kHandR, kHandL}) sc(b, 1, 1, 0.04);
  for (int b : {kPelvis, kLumbar, kThorax}) sc(b, 1, 2, 0.04);
  sc(kHead, 1, 2, 0.03);
  for (int b : {kPelvis, kThorax}) sc(b, 0, 3, 0.05);
  for (int b : {kFemurR, kTibiaR, kFemurL, kTibiaL}) girth[b][4] = 0.08;
  for (int b : {kHumerusR, kUlnaR, kRadiusR, kHumerusL, kUlnaL, kRadiusL}) girth[b][5] = 0.08;
  girth[kLumbar][6] = 0.10;
  girth[kHead][7] = 0.06;
}

// Envelope part order differs from the skeleton order; the correspondence
// table maps between them.
const std::array<int, kBoneCount> kPartOrder = {
    kPelvis, kFemurR, kFemurL, kLumbar, kTibiaR, kTibiaL, kThorax, kTalusR, kTalusL, kHead, kScapulaR, kScapulaL,
    kCalcnR, kCalcnL, kHumerusR, kHumerusL, kToesR, kToesL, kUlnaR, kUlnaL, kRadiusR, kRadiusL, kHandR, kHandL};

Mesh bone_tube(const Vec3& seg) {
  Mesh m;
  Builder b;
  Piece p;
  const double L = std::max(seg.norm(), 0.02);
  const Vec3 dir = seg.norm() > 1e-9 ? Vec3(seg.normalized()) : Vec3::UnitY();
  p.a = Vec3::Zero();
  p.b = dir * L;
  p.side = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
  p.radius = {{0.0, 0.012, 0.012}, {L, 0.009, 0.009}};
  p.ctrl = {{0.0, 0}};
  p.segments = 6;
  b.add(p, 0, L);
  m.vertices.resize(static_cast<Eigen::Index>(b.verts.size()), 3);
  for (size_t i = 0; i < b.verts.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      m.vertices(static_cast<Eigen::Index>(i), c) = static_cast<double>(static_cast<float>(b.verts[i][c]));
    }
  }
  m.faces.resize(static_cast<Eigen::Index>(b.faces.size()), 3);
  for (size_t i = 0; i < b.faces.size(); ++i) m.faces.row(static_cast<Eigen::Index>(i)) = b.faces[i].transpose();
  return m;
}

std::vector<int> farthest_points(const std::vector<int>& cand, const std::vector<Vec3>& pos, int count) {
  std::vector<int> out;
  if (cand.empty() || count <= 0) return out;
  std::vector<double> dmin(cand.size(), std::numeric_limits<double>::infinity());
  int pick = 0;
  for (int k = 0; k < count && k < static_cast<int>(cand.size()); ++k) {
    out.push_back(cand[pick]);
    int next = -1;
    double best = -1;
    for (size_t c = 0; c < cand.size(); ++c) {
      dmin[c] = std::min(dmin[c], (pos[cand[c]] - pos[cand[pick]]).norm());
      if (dmin[c] > best) {
        best = dmin[c];
        next = static_cast<int>(c);
      }
    }
    if (best <= 0) break;
    pick = next;
  }
  return out;
}

}  // namespace

EnvelopeModel build_envelope(const EnvelopeConfig& config) {
  if (!(config.resolution > 0) || config.resolution > 8) fail(ErrorCode::ConfigError, "resolution must be in (0, 8]");
  if (config.shape_dims < 1 || config.shape_dims > kShapeMax) {
    fail(ErrorCode::ConfigError, fmt::format("shape_dims must be in [1, {}]", kShapeMax));
  }
  if (config.bony_markers < 0 || config.soft_markers < 0) fail(ErrorCode::ConfigError, "negative marker count");
  const int K = config.shape_dims;

  Draft d = anatomy();
  const int nb = static_cast<int>(d.bones.size());
  std::vector<Mat3> R(nb);
  for (int i = 0; i < nb; ++i) {
    R[i] = rotation_between(Vec3::UnitY(), d.bones[i].direction).rotation.matrix() * rot_y(d.bones[i].roll);
    d.bones[i].spec.axis = R[i].transpose() * d.bones[i].axis_world;
    d.bones[i].spec.axis2 = R[i].transpose() * d.bones[i].axis2_world;
  }
  auto J = [&](int i) { return d.bones[i].spec.rest_joint; };

  // pieces
  const double spacing = 0.05 / config.resolution;
  auto segs = [&](int base) { return std::max(6, static_cast<int>(std::lround(base * config.resolution))); };
  std::vector<Piece> pieces;
  enum { kTorso, kNeck };
  {
    Piece p;
    p.a = {0, 0.84, 0};
    p.b = {0, 1.46, 0};
    p.side = Vec3::UnitX();
    p.radius = {{0.0, 0.15, 0.10}, {0.11, 0.15, 0.10}, {0.26, 0.13, 0.095}, {0.46, 0.16, 0.11}, {0.62, 0.15, 0.10}};
    p.ctrl = {{0.14, kPelvis}, {0.24, kLumbar}, {0.34, kLumbar}, {0.44, kThorax}};
    p.segments = segs(24);
    p.girth_parts = {kLumbar};
    pieces.push_back(p);
  }
  {
    Piece p;
    p.a = {0, 1.44, 0};
    p.b = {0, 1.70, 0};
    p.side = Vec3::UnitX();
    p.radius = {{0.0, 0.055, 0.055}, {0.08, 0.055, 0.055}, {0.14, 0.085, 0.095}, {0.26, 0.085, 0.095}};
    p.ctrl = {{0.04, kThorax}, {0.10, kHead}};
    p.segments = segs(16);
    p.girth_parts = {kHead};
    pieces.push_back(p);
  }
  std::array<int, 2> thigh{}, shin{}, foot{}, pad{}, upper{}, fore{}, hand{};
  for (int side = 0; side < 2; ++side) {
    auto P = [side](Vec3 v) { return side == 0 ? v : mirror(v); };
    const int fem = side == 0 ? kFemurR : kFemurL;
    const int hum = side == 0 ? kHumerusR : kHumerusL;
    {
      Piece p;
      p.b = J(fem + 1);
      p.a = J(fem) - 0.03 * (J(fem + 1) - J(fem)).normalized();
      const double L = (p.b - p.a).norm();
      p.side = Vec3::UnitX();
      p.radius = {{0.0, 0.085, 0.085}, {L, 0.06, 0.06}};
      p.ctrl = {{0.03, kPelvis}, {0.10, fem}, {L - 0.04, fem}, {L + 0.02, fem + 1}};
      p.segments = segs(16);
      p.girth_parts = {fem, fem + 1};
      thigh[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
    {
      Piece p;
      p.a = J(fem + 1);
      p.b = P({-0.085, 0.11, 0});
      const double L = (p.b - p.a).norm();
      p.side = Vec3::UnitX();
      p.radius = {{0.0, 0.058, 0.058}, {L, 0.038, 0.038}};
      p.ctrl = {{-0.02, fem}, {0.04, fem + 1}, {L - 0.05, fem + 1}, {L - 0.01, fem + 2}};
      p.segments = segs(14);
      p.girth_parts = {fem, fem + 1};
      shin[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
    {
      Piece p;
      p.a = P({-0.085, 0.045, -0.06});
      p.b = P({-0.085, 0.025, 0.21});
      p.side = Vec3::UnitX();
      const double L = (p.b - p.a).norm();
      p.radius = {{0.0, 0.04, 0.035}, {0.15, 0.048, 0.03}, {L, 0.04, 0.018}};
      p.ctrl = {{0.18, fem + 3}, {0.23, fem + 4}};
      p.segments = segs(12);
      foot[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
    {
      Piece p;
      p.a = J(hum - 1);
      p.b = J(hum);
      p.side = Vec3::UnitY();
      p.radius = {{0.0, 0.05, 0.05}, {(p.b - p.a).norm(), 0.05, 0.05}};
      p.ctrl = {{0.07, hum - 1}, {0.14, hum}};
      p.segments = segs(12);
      pad[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
    {
      Piece p;
      p.a = P({-0.18, 1.42, 0});
      p.b = J(hum + 1);
      const double L = (p.b - p.a).norm();
      p.side = Vec3::UnitZ();
      p.radius = {{0.0, 0.05, 0.05}, {L, 0.04, 0.04}};
      p.ctrl = {{0.0, hum - 1}, {0.06, hum}, {L - 0.04, hum}, {L + 0.02, hum + 1}};
      p.segments = segs(14);
      p.girth_parts = {hum, hum + 1};
      upper[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
    {
      Piece p;
      p.a = J(hum + 1);
      p.b = J(hum + 3);
      const double L = (p.b - p.a).norm();
      p.side = Vec3::UnitZ();
      p.radius = {{0.0, 0.04, 0.04}, {L, 0.03, 0.027}};
      p.ctrl = {{-0.02, hum}, {0.04, hum + 1}, {0.09, hum + 1}, {0.13, hum + 2}, {L - 0.03, hum + 2}, {L + 0.02, hum + 3}};
      p.segments = segs(12);
      p.girth_parts = {hum, hum + 1, hum + 2};
      fore[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
    {
      Piece p;
      p.a = J(hum + 3);
      p.b = P({-0.91, 1.42, 0});
      p.side = Vec3::UnitZ();
      const double L = (p.b - p.a).norm();
      p.radius = {{0.0, 0.04, 0.02}, {0.1, 0.045, 0.018}, {L, 0.035, 0.012}};
      p.ctrl = {{-0.01, hum + 2}, {0.03, hum + 3}};
      p.segments = segs(10);
      hand[side] = static_cast<int>(pieces.size());
      pieces.push_back(p);
    }
  }

  Builder builder;
  std::vector<PieceRings> rings;
  for (size_t i = 0; i < pieces.size(); ++i) rings.push_back(builder.add(pieces[i], static_cast<int>(i), spacing));
  const int N = static_cast<int>(builder.verts.size());

  // segments: landmarks at the far poles of head, hands and feet
  std::vector<BoneSegment> segments(nb);
  for (int i = 0; i < nb; ++i) {
    if (d.bones[i].segment_end >= 0) {
      segments[i].end_joint = d.bones[i].segment_end;
      segments[i].rest_local = R[i].transpose() * (J(d.bones[i].segment_end) - J(i));
    }
  }
  auto landmark = [&](int bone, int vertex) {
    segments[bone].landmark_vertex = vertex;
    segments[bone].rest_local = R[bone].transpose() * (builder.verts[vertex] - J(bone));
  };
  landmark(kHead, rings[kNeck].pole_end);
  for (int side = 0; side < 2; ++side) {
    landmark(side == 0 ? kToesR : kToesL, rings[foot[side]].pole_end);
    landmark(side == 0 ? kHandR : kHandL, rings[hand[side]].pole_end);
  }

  // scapula ellipsoid from the thorax region of the template
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (int v = 0; v < N; ++v) {
    const VertexInfo& vi = builder.info[v];
    int dom = vi.w[0].first;
    if (vi.nw == 2 && vi.w[1].second > vi.w[0].second) dom = vi.w[1].first;
    if (dom == kThorax && vi.piece == kTorso) {
      lo = lo.cwiseMin(builder.verts[v]);
      hi = hi.cwiseMax(builder.verts[v]);
    }
  }
  const Vec3 semi = 0.5 * 1.05 * (hi - lo);
  Mat3 ell_world = Mat3::Identity();
  ell_world(0, 0) = -1;
  ell_world(2, 2) = -1;

  std::vector<JointSpec> specs;
  int offset = 0;
  for (int i = 0; i < nb; ++i) {
    JointSpec s = d.bones[i].spec;
    s.dof_offset = offset;
    offset += s.dofs();
    if (s.kind == JointKind::Scapula3) {
      s.semi_axes = semi;
      s.ellipsoid_frame = R[i].transpose() * ell_world;
    }
    specs.push_back(s);
  }

  EnvelopeModel model;
  model.skeleton.tree = KinematicTree(specs);
  model.skeleton.rest_rotation = R;
  model.skeleton.segments = segments;
  for (int i = 0; i < nb; ++i) model.skeleton.bone_meshes.push_back(bone_tube(segments[i].rest_local));

  ShapeTable scale_tab;
  GirthTable girth_tab;
  shape_tables(scale_tab, girth_tab);
  model.scale_basis = Eigen::MatrixXd::Zero(nb * 3, K);
  for (int r = 0; r < nb * 3; ++r) {
    for (int k = 0; k < K; ++k) model.scale_basis(r, k) = scale_tab[r][k];
  }

  // bone-frame coordinates and radial directions per influence
  struct Influence {
    int bone;
    double w;
    Vec3 local, radial;
  };
  std::vector<std::array<Influence, 2>> infl(N);
  for (int v = 0; v < N; ++v) {
    const VertexInfo& vi = builder.info[v];
    for (int k = 0; k < vi.nw; ++k) {
      const int b = vi.w[k].first;
      const auto& gp = pieces[vi.piece].girth_parts;
      const bool girthy = std::find(gp.begin(), gp.end(), b) != gp.end();
      const Vec3 local = R[b].transpose() * (builder.verts[v] - J(b));
      // girth acts perpendicular to the bone's long (y) axis
      infl[v][k] = {b, vi.w[k].second, local, girthy ? Vec3(local.x(), 0.0, local.z()) : Vec3::Zero()};
    }
  }
  auto shaped_at = [&](const Eigen::VectorXd& beta) {
    BoneScales s = BoneScales::Ones(nb, 3);
    for (int r = 0; r < nb * 3; ++r) s(r / 3, r % 3) += model.scale_basis.row(r).dot(beta);
    const Placement pl = model.skeleton.placement(s);
    Points out(N, 3);
    for (int v = 0; v < N; ++v) {
      Vec3 p = Vec3::Zero();
      for (int k = 0; k < builder.info[v].nw; ++k) {
        const Influence& in = infl[v][k];
        double g = 0;
        for (int j = 0; j < K; ++j) g += girth_tab[in.bone][j] * beta[j];
        const Vec3 loc = s.row(in.bone).transpose().cwiseProduct(in.local + g * in.radial);
        p += in.w * (pl.joint[in.bone] + pl.rotation[in.bone] * loc);
      }
      out.row(v) = p.transpose();
    }
    return out;
  };
  const Points T = shaped_at(Eigen::VectorXd::Zero(K));
  model.mesh.vertices = T;
  model.mesh.faces.resize(static_cast<Eigen::Index>(builder.faces.size()), 3);
  for (size_t f = 0; f < builder.faces.size(); ++f) model.mesh.faces.row(static_cast<Eigen::Index>(f)) = builder.faces[f].transpose();
  model.shape_basis.resize(3 * N, K);
  for (int j = 0; j < K; ++j) {
    const Points field = shaped_at(Eigen::VectorXd::Unit(K, j)) - T;
    model.shape_basis.col(j) = Eigen::Map<const Eigen::VectorXd>(field.data(), 3 * N);
  }

  // parts, weights, regressor
  std::array<int, kBoneCount> bone_to_part{};
  for (int p = 0; p < kBoneCount; ++p) bone_to_part[kPartOrder[p]] = p;
  for (int p = 0; p < kBoneCount; ++p) {
    const int b = kPartOrder[p];
    model.part_names.push_back(d.bones[b].spec.name);
    model.part_to_bone.push_back(b);
    const int parent = d.bones[b].spec.parent;
    model.part_parent.push_back(parent < 0 ? -1 : bone_to_part[parent]);
  }
  std::vector<Eigen::Triplet<double>> wt;
  for (int v = 0; v < N; ++v) {
    for (int k = 0; k < builder.info[v].nw; ++k) {
      if (infl[v][k].w > 0) wt.emplace_back(v, bone_to_part[infl[v][k].bone], infl[v][k].w);
    }
  }
  model.weights.resize(N, kBoneCount);
  model.weights.setFromTriplets(wt.begin(), wt.end());

  auto ring_of = [&](int piece, double s) { return rings[piece].rings[nearest_ring(rings[piece], s)]; };
  std::vector<std::vector<int>> joint_ring(kBoneCount);
  joint_ring[kPelvis] = ring_of(kTorso, 0.95 - 0.84);
  joint_ring[kLumbar] = ring_of(kTorso, 1.05 - 0.84);
  joint_ring[kThorax] = ring_of(kTorso, 1.25 - 0.84);
  joint_ring[kHead] = ring_of(kNeck, 0.06);
  for (int side = 0; side < 2; ++side) {
    const int fem = side == 0 ? kFemurR : kFemurL;
    const int hum = side == 0 ? kHumerusR : kHumerusL;
    joint_ring[fem] = ring_of(thigh[side], 0.0);
    joint_ring[fem + 1] = ring_of(shin[side], 0.0);
    joint_ring[fem + 2] = rings[shin[side]].rings.back();
    joint_ring[fem + 3] = ring_of(foot[side], 0.04);
    joint_ring[fem + 4] = ring_of(foot[side], 0.21);
    joint_ring[hum - 1] = ring_of(pad[side], 0.0);
    joint_ring[hum] = ring_of(upper[side], 0.0);
    joint_ring[hum + 1] = ring_of(fore[side], 0.0);
    joint_ring[hum + 2] = ring_of(fore[side], 0.015);
    joint_ring[hum + 3] = ring_of(hand[side], 0.03);
  }
  std::vector<Eigen::Triplet<double>> rt;
  for (int b = 0; b < kBoneCount; ++b) {
    const auto& ring = joint_ring[b];
    for (int v : ring) rt.emplace_back(bone_to_part[b], v, 1.0 / static_cast<double>(ring.size()));
  }
  model.joint_regressor.resize(kBoneCount, N);
  model.joint_regressor.setFromTriplets(rt.begin(), rt.end());

  // markers
  std::vector<Vec3> pos(builder.verts.begin(), builder.verts.end());
  std::map<int, int> quota = {{kPelvis, 4}, {kFemurR, 3}, {kTibiaR, 3}, {kTalusR, 1}, {kCalcnR, 2}, {kToesR, 1},
                              {kFemurL, 3}, {kTibiaL, 3}, {kTalusL, 1}, {kCalcnL, 2}, {kToesL, 1}, {kLumbar, 2},
                              {kThorax, 5}, {kHead, 4}, {kScapulaR, 2}, {kHumerusR, 3}, {kUlnaR, 2}, {kRadiusR, 2},
                              {kHandR, 2}, {kScapulaL, 2}, {kHumerusL, 3}, {kUlnaL, 2}, {kRadiusL, 2}, {kHandL, 2}};
  int quota_total = 0;
  for (const auto& [b, q] : quota) quota_total += q;
  auto make_marker = [&](int v, int bone, MarkerClass cls, int index) {
    Marker m;
    m.cls = cls;
    m.vertex = v;
    m.bone = bone;
    m.weight = cls == MarkerClass::Bony ? config.bony_weight : config.soft_weight;
    m.name = fmt::format("{}_{}{}", d.bones[bone].spec.name, cls == MarkerClass::Bony ? "b" : "s", index);
    m.personalization = Eigen::Matrix3Xd::Zero(3, K);
    for (int k = 0; k < builder.info[v].nw; ++k) {
      if (infl[v][k].bone != bone) continue;
      m.offset = infl[v][k].local;
      for (int j = 0; j < K; ++j) m.personalization.col(j) = girth_tab[bone][j] * infl[v][k].radial;
    }
    return m;
  };
  std::vector<Marker> bony;
  for (int b = 0; b < nb; ++b) {
    const int want = static_cast<int>(std::lround(quota[b] * static_cast<double>(config.bony_markers) / quota_total));
    std::vector<int> cand;
    for (int v = 0; v < N; ++v) {
      const VertexInfo& vi = builder.info[v];
      if (vi.nw == 1 && vi.w[0].first == b && vi.radial.norm() > 0) cand.push_back(v);
    }
    int idx = 0;
    for (int v : farthest_points(cand, pos, want)) bony.push_back(make_marker(v, b, MarkerClass::Bony, idx++));
  }
  // trim or top up the global count deterministically
  while (static_cast<int>(bony.size()) > config.bony_markers) bony.pop_back();
  std::vector<int> soft_cand;
  for (int v = 0; v < N; ++v) {
    const VertexInfo& vi = builder.info[v];
    if (vi.nw == 2 && std::max(vi.w[0].second, vi.w[1].second) < 0.95 && vi.radial.norm() > 0) soft_cand.push_back(v);
  }
  std::vector<Marker> soft;
  std::map<int, int> soft_idx;
  for (int v : farthest_points(soft_cand, pos, config.soft_markers)) {
    const VertexInfo& vi = builder.info[v];
    const int dom = vi.w[0].second >= vi.w[1].second ? vi.w[0].first : vi.w[1].first;
    soft.push_back(make_marker(v, dom, MarkerClass::Soft, soft_idx[dom]++));
  }
  model.markers.markers = bony;
  model.markers.markers.insert(model.markers.markers.end(), soft.begin(), soft.end());
  return model;
}

KinematicTree default_tree() {
  static const KinematicTree tree = build_envelope(EnvelopeConfig{}).skeleton.tree;
  return tree;
}

}  // namespace skelrig
