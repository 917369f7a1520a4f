#pragma once

#include <vector>

#include "skelrig/ik.hpp"
#include "skelrig/mesh.hpp"

namespace skelrig {

struct HeightWeight {
  double height = 0;  // metres
  double weight = 0;  // kg
};

/// Vertical extent and enclosed volume times density. Throws OpenMesh.
HeightWeight estimate_height_weight(const Mesh& tpose, double density = 1000.0);

struct ScalePrior {
  BoneScales mean;     // s-bar
  double sigma = 0.06;

  /// Uniform mean scale equal to the height ratio.
  static ScalePrior from_height(int bones, double height, double template_height, double sigma = 0.06);
};

/// sum ((s - s_bar) / sigma)^2; writes d/ds when gradient is given.
double scale_prior(const BoneScales& s, const ScalePrior& prior, BoneScales* gradient = nullptr);

struct BilevelOptions {
  double prior_weight = 1.0;     // lambda_p
  double residual_unit = 0.001;  // marker residuals are measured in this unit (m) in the outer objective
  double relative_tolerance = 1e-6;
  int max_rounds = 20;
  int scale_iterations = 8;      // Gauss-Newton steps for (s, delta) per round
  bool coupled_step = true;      // linearise poses together with (s, delta) in the outer step
  double scale_lo = 0.5;
  double scale_hi = 2.0;
  double offset_cap = 0.05;      // metres
  double offset_sigma = 0.001;   // metres; Gaussian prior on delta, weighted by prior_weight (0 disables)
  LmOptions ik;
};

struct FrameFit {
  double bony_mae = 0;  // metres
  double soft_mae = 0;
  int iterations = 0;
  bool converged = false;
};

struct FitReport {
  std::vector<FrameFit> frames;          // all sequences, in order
  std::vector<double> objective;         // outer objective, initial value then per round
  int rounds = 0;
  bool converged = false;
  bool monotone = true;
  double mean_bony_mae() const;
  double mean_soft_mae() const;
};

struct BilevelResult {
  ScaleSet scales;
  std::vector<std::vector<Pose>> poses;  // per sequence, per frame
  FitReport report;
};

using MarkerSequence = std::vector<Points>;

/// Block-coordinate bi-level fit of bone scales, marker offsets and poses.
/// beta personalises the template marker offsets (may be empty).
BilevelResult bilevel_fit(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                          const std::vector<MarkerSequence>& sequences, const ScalePrior& prior,
                          const BilevelOptions& options = {});

/// Outer objective for fixed (s, delta, poses).
double bilevel_objective(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                         const std::vector<MarkerSequence>& sequences, const ScaleSet& scales,
                         const std::vector<std::vector<Pose>>& poses, const ScalePrior& prior,
                         const BilevelOptions& options);

/// Markers at a pose as a function of the 72 bone scales, with d x / d s
/// (3M x 72, column = bone * 3 + axis).
Points scaled_markers(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                      const ScaleSet& scales, const Pose& pose, Eigen::MatrixXd* d_scales = nullptr);

/// Offset prior sum |delta_k / sigma|^2.
double offset_prior(const std::vector<Vec3>& delta, double sigma);

/// Per-class marker mean absolute (Euclidean) error.
FrameFit marker_errors(const MarkerSet& markers, const Points& fitted, const Points& targets);

}  // namespace skelrig
