#pragma once

#include <Eigen/Core>

namespace skelrig {

struct NnlsOptions {
  int max_iterations = 0;  // outer iterations; 0 means 3 * columns
  double tolerance = 0;    // gradient tolerance; 0 picks a scale-aware default
};

struct NnlsResult {
  Eigen::VectorXd x;
  double objective = 0;   // 0.5 * ||Ax - b||^2
  int iterations = 0;
  bool converged = true;  // false when the iteration cap was hit
};

/// Lawson-Hanson active set. Subproblems are solved by QR on the active columns.
NnlsResult nnls_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const NnlsOptions& options = {});

/// Same algorithm on the normal equations: minimise 0.5 x'Gx - c'x + 0.5 btb.
NnlsResult nnls_solve_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double btb,
                           const NnlsOptions& options = {});

/// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

}  // namespace skelrig
