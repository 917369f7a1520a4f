#pragma once

#include <vector>

#include "skelrig/lm.hpp"
#include "skelrig/skeleton.hpp"

namespace skelrig {

/// Markers rigidly attached to bones of a scaled skeleton.
struct MarkerRig {
  const KinematicTree* tree = nullptr;
  Placement placement;          // T-pose frames of the scaled skeleton
  std::vector<int> bone;        // per marker
  std::vector<Vec3> local;      // per marker, bone frame: s_b * offset + delta
  std::vector<double> weight;   // lambda_k

  int markers() const { return static_cast<int>(bone.size()); }
  int variables() const { return tree->dof_count() + 3; }
};

/// Offsets are the template offsets personalised by beta (empty beta: template only).
MarkerRig make_marker_rig(const SkeletonTemplate& skeleton, const MarkerSet& markers, const ScaleSet& scales,
                          const Eigen::VectorXd& beta = {});

/// Optimisation vector layout: q followed by the global translation.
Eigen::VectorXd pose_to_vector(const Pose& pose);
Pose pose_from_vector(const Eigen::VectorXd& x, int dofs);
/// Joint limits for q and unbounded translation.
void pose_bounds(const KinematicTree& tree, Eigen::VectorXd& lo, Eigen::VectorXd& hi);

Points rig_markers(const MarkerRig& rig, const Pose& pose);
/// d markers / d (q, trans), rows grouped per marker (3 rows each).
Eigen::MatrixXd marker_jacobian(const MarkerRig& rig, const Pose& pose);

/// Root rotation and translation rigidly aligning the zero-pose root-bone
/// markers to the targets; other DOFs of `pose` are kept.
Pose align_root(const MarkerRig& rig, const Points& targets, const Pose& pose);

struct IkResult {
  Pose pose;
  double energy = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_energies;
};

/// Damped least squares on E(q) = sum_k lambda_k |m_k(q) - target_k|^2.
IkResult ik_solve_frame(const MarkerRig& rig, const Points& targets, const Pose& init, const LmOptions& options = {});

}  // namespace skelrig
