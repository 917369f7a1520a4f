#pragma once

#include <vector>

#include <Eigen/Core>

namespace skelrig {

/// Weighted sum of squares E(x) = sum_i w_i |r_i(x)|^2.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;
  virtual int size() const = 0;
  virtual double energy(const Eigen::VectorXd& x) const = 0;
  /// Gauss-Newton pieces at x: H = J'WJ, g = J'Wr (so dE/dx = 2g). Returns E(x).
  virtual double linearize(const Eigen::VectorXd& x, Eigen::MatrixXd& H, Eigen::VectorXd& g) const = 0;
};

struct LmOptions {
  double initial_damping = 1e-3;
  double damping_up = 2.0;
  double damping_down = 0.5;
  double gradient_tolerance = 1e-8;  // infinity norm of the projected gradient
  double step_tolerance = 1e-10;     // infinity norm of the step
  double max_step = 0.5;             // steps longer than this (infinity norm) are shortened; 0 disables
  int max_iterations = 200;
};

struct LmResult {
  Eigen::VectorXd x;
  double energy = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_energies;  // E after each accepted step, starting with E(x0)
};

/// Levenberg-Marquardt with diag(H) scaling and box bounds (projected steps
/// with an active set). lo/hi may be empty for an unbounded problem.
LmResult lm_minimize(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi, const LmOptions& options = {});

}  // namespace skelrig
