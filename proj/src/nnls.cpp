#include "skelrig/nnls.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "skelrig/error.hpp"

namespace skelrig {
namespace {

using Solve = std::function<Eigen::VectorXd(const std::vector<int>&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;  // -grad f = A'(b - Ax)

NnlsResult lawson_hanson(int n, const Gradient& neg_grad, const Solve& solve, const NnlsOptions& opt, double scale) {
  const int max_outer = opt.max_iterations > 0 ? opt.max_iterations : std::max(3 * n, 30);
  const double tol = opt.tolerance > 0 ? opt.tolerance : 1e-13 * std::max(scale, 1.0);
  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  std::vector<char> in_p(n, 0);
  std::vector<char> blocked(n, 0);
  Eigen::VectorXd& x = res.x;
  Eigen::VectorXd w = neg_grad(x);
  int it = 0;
  while (true) {
    int t = -1;
    double best = tol;
    for (int j = 0; j < n; ++j) {
      if (!in_p[j] && !blocked[j] && w[j] > best) {
        best = w[j];
        t = j;
      }
    }
    if (t < 0) break;
    if (it++ >= max_outer) {
      res.converged = false;
      break;
    }
    in_p[t] = 1;
    bool degenerate = false;
    for (int inner = 0; inner < 10 * n + 10; ++inner) {
      std::vector<int> P;
      for (int j = 0; j < n; ++j) {
        if (in_p[j]) P.push_back(j);
      }
      const Eigen::VectorXd zp = solve(P);
      Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
      for (size_t k = 0; k < P.size(); ++k) z[P[k]] = zp[static_cast<Eigen::Index>(k)];
      if (inner == 0 && z[t] <= 0) {
        // newly added column does not help numerically; skip it this round
        in_p[t] = 0;
        blocked[t] = 1;
        degenerate = true;
        break;
      }
      bool feasible = true;
      for (int j : P) feasible = feasible && z[j] > 0;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 2.0;
      int hit = -1;
      for (int j : P) {
        if (z[j] <= 0) {
          const double a = x[j] / (x[j] - z[j]);
          if (a < alpha) {
            alpha = a;
            hit = j;
          }
        }
      }
      x += alpha * (z - x);
      x[hit] = 0.0;
      for (int j : P) {
        if (x[j] <= 0) {
          x[j] = 0.0;
          in_p[j] = 0;
        }
      }
    }
    w = neg_grad(x);
    if (!degenerate) std::fill(blocked.begin(), blocked.end(), 0);
  }
  return res;
}

}  // namespace

NnlsResult nnls_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const NnlsOptions& options) {
  if (A.cols() < 1) fail(ErrorCode::DimensionMismatch, "nnls needs at least one column");
  if (A.rows() != b.size()) fail(ErrorCode::DimensionMismatch, "nnls row count mismatch");
  const int n = static_cast<int>(A.cols());
  auto neg_grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A.transpose() * (b - A * x); };
  auto solve = [&](const std::vector<int>& P) -> Eigen::VectorXd {
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(P.size()));
    for (size_t k = 0; k < P.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(P[k]);
    return Ap.colPivHouseholderQr().solve(b);
  };
  const double scale = (A.transpose() * b).cwiseAbs().maxCoeff() + A.cwiseAbs2().colwise().sum().maxCoeff();
  NnlsResult r = lawson_hanson(n, neg_grad, solve, options, scale);
  r.objective = 0.5 * (A * r.x - b).squaredNorm();
  return r;
}

NnlsResult nnls_solve_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double btb, const NnlsOptions& options) {
  if (G.cols() < 1 || G.rows() != G.cols() || c.size() != G.rows()) {
    fail(ErrorCode::DimensionMismatch, "nnls gram system must be square and match c");
  }
  const int n = static_cast<int>(G.cols());
  auto neg_grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return c - G * x; };
  auto solve = [&](const std::vector<int>& P) -> Eigen::VectorXd {
    const Eigen::Index k = static_cast<Eigen::Index>(P.size());
    Eigen::MatrixXd Gp(k, k);
    Eigen::VectorXd cp(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      cp[i] = c[P[i]];
      for (Eigen::Index j = 0; j < k; ++j) Gp(i, j) = G(P[i], P[j]);
    }
    return Gp.ldlt().solve(cp);
  };
  const double scale = c.cwiseAbs().maxCoeff() + G.diagonal().maxCoeff();
  NnlsResult r = lawson_hanson(n, neg_grad, solve, options, scale);
  r.objective = std::max(0.0, 0.5 * r.x.dot(G * r.x) - c.dot(r.x) + 0.5 * btb);
  return r;
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n == 0) return v;
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0, theta = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

}  // namespace skelrig
