#pragma once

#include <vector>

#include "skelrig/lm.hpp"
#include "skelrig/skelmodel.hpp"

namespace skelrig {

struct MeshFitFrame {
  double mean_v2v = 0;  // metres
  double max_v2v = 0;
  int iterations = 0;
  bool converged = false;
};

struct MeshFitResult {
  std::vector<Pose> poses;
  std::vector<MeshFitFrame> frames;
  double mean_v2v() const;
  double mean_max_v2v() const;
};

/// d v_skin / d (q, trans), 3 rows per vertex.
Eigen::MatrixXd skin_jacobian(const SkelModel& model, const SkelShape& shape, const Pose& pose);

/// Root rotation and translation aligning the root-owned rest vertices to the targets.
Pose align_root_to_mesh(const SkelModel& model, const SkelShape& shape, const Points& target);

/// Per frame: minimise the mean squared vertex distance over (q, trans),
/// warm-started from the previous frame. The first frame starts from `init`
/// when given, otherwise from a root alignment.
MeshFitResult fit_skel_to_mesh(const SkelModel& model, const Eigen::VectorXd& beta, const std::vector<Points>& targets,
                               const LmOptions& options = {}, const Pose* init = nullptr);

/// Mean and max vertex distance between two vertex arrays.
MeshFitFrame vertex_distance(const Points& a, const Points& b);

}  // namespace skelrig
