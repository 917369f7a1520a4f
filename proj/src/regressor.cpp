#include "skelrig/regressor.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>
#include <unordered_map>

#include <Eigen/LU>

#include "skelrig/error.hpp"
#include "skelrig/nnls.hpp"
#include "skelrig/parallel.hpp"

namespace skelrig {

namespace {

std::uint64_t hash_bytes(const double* p, std::size_t n, std::uint64_t h) {
  const auto* c = reinterpret_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= c[i];
    h *= 1099511628211ULL;
  }
  return h;
}

bool same_frame(const RegressorFrame& a, const RegressorFrame& b) {
  auto eq = [](const Points& x, const Points& y) {
    return x.rows() == y.rows() && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) == 0;
  };
  return eq(*a.vertices, *b.vertices) && eq(*a.joints, *b.joints);
}

// Equality-constrained polish: start from a feasible simplex point and move
// towards the constrained optimum on the support, dropping blocking entries.
Eigen::VectorXd simplex_resolve(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, Eigen::VectorXd x) {
  const Eigen::Index n = x.size();
  const double ridge = 1e-14 * std::max(G.diagonal().maxCoeff(), 1.0);
  for (int pass = 0; pass < 4 * n + 4; ++pass) {
    std::vector<Eigen::Index> P;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (x[j] > 0) P.push_back(j);
    }
    const Eigen::Index k = static_cast<Eigen::Index>(P.size());
    if (k == 0) break;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd rhs(k + 1);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) K(i, j) = G(P[i], P[j]);
      K(i, i) += ridge;
      K(i, k) = K(k, i) = 1.0;
      rhs[i] = c[P[i]];
    }
    rhs[k] = 1.0;
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < k; ++i) z[P[i]] = sol[i];
    bool feasible = true;
    for (Eigen::Index j : P) feasible = feasible && z[j] > 0;
    if (feasible) {
      x = z;
      break;
    }
    double alpha = 2.0;
    Eigen::Index hit = -1;
    for (Eigen::Index j : P) {
      if (z[j] <= 0) {
        const double a = x[j] / (x[j] - z[j]);
        if (a < alpha) {
          alpha = a;
          hit = j;
        }
      }
    }
    x += alpha * (z - x);
    x[hit] = 0;
    x = x.cwiseMax(0.0);
  }
  const double s = x.sum();
  if (s > 0) x /= s;
  return x;
}

}  // namespace

JointRegressor train_joint_regressor(const std::vector<RegressorFrame>& frames, const RegressorOptions& options,
                                     RegressorReport* report) {
  if (frames.size() < 24) fail(ErrorCode::InsufficientData, "regressor training needs at least 24 frames");
  std::set<int> subjects;
  for (const auto& f : frames) subjects.insert(f.subject);
  if (subjects.size() < 2) fail(ErrorCode::InsufficientData, "regressor training needs at least 2 subjects");
  const Eigen::Index N = frames[0].vertices->rows();
  const Eigen::Index J = frames[0].joints->rows();
  for (const auto& f : frames) {
    if (f.vertices->rows() != N || f.joints->rows() != J) fail(ErrorCode::DimensionMismatch, "inconsistent frame sizes");
  }
  if (!(options.candidate_fraction > 0 && options.candidate_fraction <= 1) || !(options.radius_fraction > 0)) {
    fail(ErrorCode::ConfigError, "regressor candidate fraction / radius out of range");
  }

  // drop exact replicas
  std::vector<RegressorFrame> uniq;
  std::unordered_map<std::uint64_t, std::vector<int>> seen;
  int dropped = 0;
  for (const auto& f : frames) {
    std::uint64_t h = 1469598103934665603ULL;
    h = hash_bytes(f.vertices->data(), static_cast<std::size_t>(f.vertices->size()), h);
    h = hash_bytes(f.joints->data(), static_cast<std::size_t>(f.joints->size()), h);
    auto& bucket = seen[h];
    bool dup = false;
    for (int u : bucket) dup = dup || same_frame(uniq[u], f);
    if (dup) {
      ++dropped;
      continue;
    }
    bucket.push_back(static_cast<int>(uniq.size()));
    uniq.push_back(f);
  }
  const int F = static_cast<int>(uniq.size());

  double height = 0;
  for (const auto& f : uniq) height = std::max(height, f.vertices->col(1).maxCoeff() - f.vertices->col(1).minCoeff());
  const double radius = options.radius_fraction * height;
  const int max_nz = std::max(1, static_cast<int>(std::floor(options.candidate_fraction * static_cast<double>(N))));

  std::vector<std::vector<std::pair<int, double>>> rows(J);
  std::vector<double> joint_sq(J, 0.0);
  std::vector<char> joint_ok(J, 1);
  parallel_for(static_cast<int>(J), [&](int j) {
    // candidates by mean distance to the joint over the training frames
    std::vector<double> dist(N, 0.0);
    for (const auto& f : uniq) {
      const Eigen::RowVector3d p = f.joints->row(j);
      for (Eigen::Index v = 0; v < N; ++v) dist[v] += (f.vertices->row(v) - p).norm();
    }
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
    std::vector<int> cand;
    for (int v : order) {
      if (static_cast<int>(cand.size()) >= max_nz) break;
      if (dist[v] / F <= radius || cand.empty()) cand.push_back(v);
    }
    const Eigen::Index C = static_cast<Eigen::Index>(cand.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(C, C);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(C);
    double btb = 0;
    Eigen::MatrixXd A(3, C);
    for (const auto& f : uniq) {
      for (Eigen::Index k = 0; k < C; ++k) A.col(k) = f.vertices->row(cand[k]).transpose();
      const Eigen::Vector3d b = f.joints->row(j).transpose();
      G.noalias() += A.transpose() * A;
      c.noalias() += A.transpose() * b;
      btb += b.squaredNorm();
    }
    // soft sum-to-one row, then exact constraint on the support
    const double mu2 = 10.0 * G.diagonal().mean();
    Eigen::MatrixXd Gs = G;
    Gs.array() += mu2;
    const Eigen::VectorXd cs = c.array() + mu2;
    const NnlsResult r = nnls_solve_gram(Gs, cs, btb + mu2);
    joint_ok[j] = r.converged;
    Eigen::VectorXd x = project_to_simplex(r.x);
    x = simplex_resolve(G, c, x);
    for (Eigen::Index k = 0; k < C; ++k) {
      if (x[k] > 0) rows[j].emplace_back(cand[k], x[k]);
    }
    std::sort(rows[j].begin(), rows[j].end());
    const double sq = std::max(0.0, x.dot(G * x) - 2 * c.dot(x) + btb);
    joint_sq[j] = sq;
  });

  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index j = 0; j < J; ++j) {
    for (const auto& [v, w] : rows[j]) trip.emplace_back(static_cast<int>(j), v, w);
  }
  JointRegressor reg;
  reg.weights.resize(J, N);
  reg.weights.setFromTriplets(trip.begin(), trip.end());
  if (report) {
    report->frames_used = F;
    report->duplicates_dropped = dropped;
    report->joint_rms.assign(J, 0.0);
    double total = 0;
    for (Eigen::Index j = 0; j < J; ++j) {
      report->joint_rms[j] = std::sqrt(joint_sq[j] / F);
      total += joint_sq[j];
    }
    report->rms_residual = std::sqrt(total / (static_cast<double>(F) * J));
    report->converged = std::all_of(joint_ok.begin(), joint_ok.end(), [](char c) { return c != 0; });
  }
  return reg;
}

Points regress_joints(const JointRegressor& regressor, const Points& vertices) {
  if (vertices.rows() != regressor.vertices()) fail(ErrorCode::DimensionMismatch, "vertex count does not match regressor");
  return regressor.weights * vertices;
}

double regressor_rms(const JointRegressor& regressor, const std::vector<RegressorFrame>& frames) {
  double total = 0;
  Eigen::Index count = 0;
  for (const auto& f : frames) {
    const Points J = regress_joints(regressor, *f.vertices);
    total += (J - *f.joints).rowwise().squaredNorm().sum();
    count += J.rows();
  }
  return count ? std::sqrt(total / static_cast<double>(count)) : 0.0;
}

}  // namespace skelrig
