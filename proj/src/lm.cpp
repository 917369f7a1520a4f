#include "skelrig/lm.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "skelrig/error.hpp"

namespace skelrig {

namespace {

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() == 0) return x;
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Variables pinned at a bound with the descent direction pointing outward.
std::vector<char> active_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  std::vector<char> a(x.size(), 0);
  if (lo.size() == 0) return a;
  for (Eigen::Index i = 0; i < x.size(); ++i) a[i] = (x[i] <= lo[i] && g[i] > 0) || (x[i] >= hi[i] && g[i] < 0);
  return a;
}

}  // namespace

LmResult lm_minimize(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi, const LmOptions& options) {
  const int n = problem.size();
  if (x0.size() != n) fail(ErrorCode::DimensionMismatch, "initial point has the wrong size");
  if (lo.size() != hi.size() || (lo.size() != 0 && lo.size() != n)) {
    fail(ErrorCode::DimensionMismatch, "bounds have the wrong size");
  }
  LmResult out;
  out.x = clamp(x0, lo, hi);
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd g(n);
  double E = problem.linearize(out.x, H, g);
  out.accepted_energies.push_back(E);
  double mu = options.initial_damping;
  bool relinearize = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    if (relinearize) {
      E = problem.linearize(out.x, H, g);
      relinearize = false;
    }
    const std::vector<char> active = active_set(out.x, g, lo, hi);
    double pg = 0;
    for (int i = 0; i < n; ++i) {
      if (!active[i]) pg = std::max(pg, std::abs(2.0 * g[i]));
    }
    if (pg < options.gradient_tolerance) {
      out.converged = true;
      break;
    }
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      if (!active[i]) free.push_back(i);
    }
    const int m = static_cast<int>(free.size());
    Eigen::MatrixXd A(m, m);
    Eigen::VectorXd b(m);
    double dmax = 0;
    for (int i = 0; i < m; ++i) dmax = std::max(dmax, H(free[i], free[i]));
    const double floor = std::max(dmax, 1e-300) * 1e-12;
    for (int i = 0; i < m; ++i) {
      b[i] = -g[free[i]];
      for (int j = 0; j < m; ++j) A(i, j) = H(free[i], free[j]);
      A(i, i) += mu * std::max(H(free[i], free[i]), floor);
    }
    Eigen::VectorXd d = A.ldlt().solve(b);
    const double dn = d.lpNorm<Eigen::Infinity>();
    if (options.max_step > 0 && dn > options.max_step) d *= options.max_step / dn;
    Eigen::VectorXd trial = out.x;
    for (int i = 0; i < m; ++i) trial[free[i]] += d[i];
    trial = clamp(trial, lo, hi);
    const double step = (trial - out.x).lpNorm<Eigen::Infinity>();
    const double Et = d.allFinite() ? problem.energy(trial) : INFINITY;
    if (Et <= E) {
      out.x = trial;
      E = Et;
      out.accepted_energies.push_back(E);
      mu = std::max(mu * options.damping_down, 1e-15);
      relinearize = true;
      if (step < options.step_tolerance) {
        out.converged = true;
        break;
      }
    } else {
      mu *= options.damping_up;
      if (step < options.step_tolerance || mu > 1e16) {
        out.converged = step < options.step_tolerance;
        break;
      }
    }
  }
  out.energy = E;
  return out;
}

}  // namespace skelrig
