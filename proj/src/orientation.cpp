#include "skelrig/orientation.hpp"

#include <fmt/format.h>

namespace skelrig {

Rotation learn_base_rotation(const std::vector<RotationPair>& pairs) {
  if (pairs.empty()) fail(ErrorCode::DegenerateInput, "no rotation pairs");
  Mat3 M = Mat3::Zero();
  for (const auto& [rs, rb] : pairs) M += rs.transpose() * rb;
  return project_to_rotation(M);
}

ShapeCorrective shape_corrective(const Rotation& base, const Vec3& rest_segment, const Vec3& target_segment) {
  if (rest_segment.norm() <= tolerance::kSegmentLength || target_segment.norm() <= tolerance::kSegmentLength) {
    fail(ErrorCode::ZeroSegment, "bone segment shorter than 1e-6 m");
  }
  const Vec3 a = (base * rest_segment).normalized();
  const Vec3 b = target_segment.normalized();
  const AlignedRotation r = rotation_between(a, b);
  return {r.rotation, r.antiparallel};
}

TPosePlacement build_placement(const KinematicTree& tree, const std::vector<BoneSegment>& segments,
                               const JointRegressor& regressor, const Points& shaped_vertices,
                               const std::vector<Rotation>& base) {
  const int n = tree.size();
  if (static_cast<int>(segments.size()) != n || static_cast<int>(base.size()) != n || regressor.joints() != n) {
    fail(ErrorCode::MissingPlacement, "segments, base rotations and regressor must cover every bone");
  }
  const Points J = regress_joints(regressor, shaped_vertices);
  TPosePlacement out;
  out.frames.rotation.resize(n);
  out.frames.joint.resize(n);
  out.base = base;
  out.shape.resize(n);
  out.rest_segment.resize(n);
  out.target_segment.resize(n);
  for (int i = 0; i < n; ++i) {
    const BoneSegment& seg = segments[i];
    const Vec3 Ji = J.row(i).transpose();
    Vec3 end;
    if (seg.end_joint >= 0) {
      end = J.row(seg.end_joint).transpose();
    } else if (seg.landmark_vertex >= 0 && seg.landmark_vertex < shaped_vertices.rows()) {
      end = shaped_vertices.row(seg.landmark_vertex).transpose();
    } else {
      fail(ErrorCode::MissingPlacement, "bone '" + tree.joint(i).name + "' has no segment end");
    }
    out.rest_segment[i] = seg.rest_local;
    out.target_segment[i] = end - Ji;
    const ShapeCorrective c = shape_corrective(base[i], seg.rest_local, end - Ji);
    if (c.antiparallel) out.warnings.push_back(fmt::format("antiparallel segment on bone {}", tree.joint(i).name));
    out.shape[i] = c.rotation;
    out.frames.rotation[i] = (c.rotation * base[i]).matrix();
    out.frames.joint[i] = Ji;
  }
  return out;
}

}  // namespace skelrig
