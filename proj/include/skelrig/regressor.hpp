#pragma once

#include <vector>

#include <Eigen/SparseCore>

#include "skelrig/rigmath.hpp"

namespace skelrig {

struct JointRegressor {
  Eigen::SparseMatrix<double, Eigen::RowMajor> weights;  // joints x vertices

  int joints() const { return static_cast<int>(weights.rows()); }
  int vertices() const { return static_cast<int>(weights.cols()); }
};

struct RegressorOptions {
  double candidate_fraction = 0.05;  // max nonzeros per joint, fraction of vertices
  double radius_fraction = 0.15;     // candidate radius, fraction of body height
};

struct RegressorFrame {
  const Points* vertices = nullptr;
  const Points* joints = nullptr;
  int subject = 0;
};

struct RegressorReport {
  double rms_residual = 0;            // metres, over unique training frames
  std::vector<double> joint_rms;
  int frames_used = 0;
  int duplicates_dropped = 0;
  bool converged = true;
};

/// Per joint: NNLS on the coordinate-stacked system restricted to nearby
/// vertices, then simplex projection and an equality-constrained re-solve on
/// the support. Exact duplicate frames are counted once.
JointRegressor train_joint_regressor(const std::vector<RegressorFrame>& frames, const RegressorOptions& options = {},
                                     RegressorReport* report = nullptr);

Points regress_joints(const JointRegressor& regressor, const Points& vertices);

/// RMS joint error of a regressor over frames.
double regressor_rms(const JointRegressor& regressor, const std::vector<RegressorFrame>& frames);

}  // namespace skelrig
