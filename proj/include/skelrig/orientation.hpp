#pragma once

#include <string>
#include <utility>
#include <vector>

#include "skelrig/regressor.hpp"
#include "skelrig/skeleton.hpp"

namespace skelrig {

/// One training correspondence: (envelope part rotation R^S, bone rotation R^B).
using RotationPair = std::pair<Mat3, Mat3>;

/// argmin over rotations of sum ||R^B - R^S R||_F^2, i.e. the polar factor of sum R^S' R^B.
Rotation learn_base_rotation(const std::vector<RotationPair>& pairs);

struct ShapeCorrective {
  Rotation rotation;
  bool antiparallel = false;
};

/// Rotation taking R_base * rest_segment onto the direction of target_segment.
ShapeCorrective shape_corrective(const Rotation& base, const Vec3& rest_segment, const Vec3& target_segment);

struct TPosePlacement {
  Placement frames;                  // composed R_i(beta), J_i(beta)
  std::vector<Rotation> base;
  std::vector<Rotation> shape;
  std::vector<Vec3> rest_segment;    // bone frame
  std::vector<Vec3> target_segment;  // world, from regressed joints / landmarks
  std::vector<std::string> warnings;
};

/// Places every bone in the T-pose of a shaped (unposed) skin mesh.
TPosePlacement build_placement(const KinematicTree& tree, const std::vector<BoneSegment>& segments,
                               const JointRegressor& regressor, const Points& shaped_vertices,
                               const std::vector<Rotation>& base);

}  // namespace skelrig
