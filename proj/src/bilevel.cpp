#include "skelrig/bilevel.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "skelrig/autodiff.hpp"
#include "skelrig/parallel.hpp"

namespace skelrig {

namespace {

constexpr int kScaleJet = 72;
using J72 = ceres::Jet<double, kScaleJet>;

double sum_of(const std::vector<FrameFit>& f, double FrameFit::*m) {
  if (f.empty()) return 0;
  double s = 0;
  for (const auto& x : f) s += x.*m;
  return s / f.size();
}

double data_term(const MarkerRig& rig, const Points& x, const Points& t, double unit2) {
  double E = 0;
  for (int k = 0; k < rig.markers(); ++k) E += rig.weight[k] * (x.row(k) - t.row(k)).squaredNorm();
  return E / unit2;
}

}  // namespace

double FitReport::mean_bony_mae() const { return sum_of(frames, &FrameFit::bony_mae); }
double FitReport::mean_soft_mae() const { return sum_of(frames, &FrameFit::soft_mae); }

HeightWeight estimate_height_weight(const Mesh& tpose, double density) {
  if (!(density > 0)) fail(ErrorCode::ConfigError, "density must be positive");
  HeightWeight hw;
  hw.weight = std::abs(enclosed_volume(tpose)) * density;
  hw.height = tpose.vertices.col(1).maxCoeff() - tpose.vertices.col(1).minCoeff();
  return hw;
}

ScalePrior ScalePrior::from_height(int bones, double height, double template_height, double sigma) {
  if (!(template_height > 0) || !(height > 0)) fail(ErrorCode::DomainError, "heights must be positive");
  ScalePrior p;
  p.mean = BoneScales::Constant(bones, 3, height / template_height);
  p.sigma = sigma;
  return p;
}

double scale_prior(const BoneScales& s, const ScalePrior& prior, BoneScales* gradient) {
  if (s.rows() != prior.mean.rows()) fail(ErrorCode::DimensionMismatch, "prior and scales differ in bone count");
  const BoneScales d = (s - prior.mean) / prior.sigma;
  if (gradient) *gradient = 2.0 * d / prior.sigma;
  return d.squaredNorm();
}

FrameFit marker_errors(const MarkerSet& markers, const Points& fitted, const Points& targets) {
  FrameFit f;
  int nb = 0, ns = 0;
  for (int k = 0; k < markers.size(); ++k) {
    const double e = (fitted.row(k) - targets.row(k)).norm();
    if (markers.markers[k].cls == MarkerClass::Bony) {
      f.bony_mae += e;
      ++nb;
    } else {
      f.soft_mae += e;
      ++ns;
    }
  }
  if (nb) f.bony_mae /= nb;
  if (ns) f.soft_mae /= ns;
  return f;
}

double offset_prior(const std::vector<Vec3>& delta, double sigma) {
  if (!(sigma > 0)) return 0;
  double p = 0;
  for (const auto& d : delta) p += d.squaredNorm();
  return p / (sigma * sigma);
}

Points scaled_markers(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                      const ScaleSet& scales, const Pose& pose, Eigen::MatrixXd* d_scales) {
  const KinematicTree& tree = skeleton.tree;
  const int nb = skeleton.bones();
  const int M = markers.size();
  if (!d_scales) return rig_markers(make_marker_rig(skeleton, markers, scales, beta), pose);
  if (3 * nb > kScaleJet) fail(ErrorCode::DimensionMismatch, "scale derivatives support at most 24 bones");
  if (pose.q.size() != tree.dof_count()) fail(ErrorCode::DimensionMismatch, "pose size does not match tree");
  Eigen::Matrix<J72, Eigen::Dynamic, 3> S(nb, 3);
  for (int b = 0; b < nb; ++b) {
    for (int a = 0; a < 3; ++a) S(b, a) = J72(scales.s(b, a), 3 * b + a);
  }
  const JointFrames<J72> frames = skeleton.frames<J72>(S);
  std::vector<J72> q(pose.q.size());
  for (Eigen::Index i = 0; i < pose.q.size(); ++i) q[i] = J72(pose.q[i]);
  const Vec3T<J72> trans = pose.trans.cast<J72>();
  const FkResult<J72> fk = forward_kinematics_t<J72>(tree, q.data(), trans, frames);
  Points out(M, 3);
  d_scales->setZero(3 * M, 3 * nb);
  for (int k = 0; k < M; ++k) {
    const Marker& m = markers.markers[k];
    const Vec3 off = markers.offset(k, beta);
    Vec3T<J72> local;
    for (int a = 0; a < 3; ++a) local[a] = S(m.bone, a) * off[a] + scales.delta[k][a];
    const Vec3T<J72> x = fk.skel[m.bone] * local;
    for (int r = 0; r < 3; ++r) {
      out(k, r) = x[r].a;
      for (int c = 0; c < 3 * nb; ++c) (*d_scales)(3 * k + r, c) = x[r].v[c];
    }
  }
  return out;
}

double bilevel_objective(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                         const std::vector<MarkerSequence>& sequences, const ScaleSet& scales,
                         const std::vector<std::vector<Pose>>& poses, const ScalePrior& prior,
                         const BilevelOptions& options) {
  const MarkerRig rig = make_marker_rig(skeleton, markers, scales, beta);
  const double unit2 = options.residual_unit * options.residual_unit;
  double E = 0;
  for (size_t s = 0; s < sequences.size(); ++s) {
    for (size_t f = 0; f < sequences[s].size(); ++f) {
      E += data_term(rig, rig_markers(rig, poses[s][f]), sequences[s][f], unit2);
    }
  }
  return E + options.prior_weight * (scale_prior(scales.s, prior) + offset_prior(scales.delta, options.offset_sigma));
}

namespace {

struct Sample {
  int seq, frame;
};

std::vector<Sample> samples_of(const std::vector<MarkerSequence>& sequences) {
  std::vector<Sample> out;
  for (size_t s = 0; s < sequences.size(); ++s) {
    for (size_t f = 0; f < sequences[s].size(); ++f) out.push_back({static_cast<int>(s), static_cast<int>(f)});
  }
  return out;
}

// Gauss-Newton on (s, delta) with poses fixed. Offsets enter linearly with a
// block-diagonal Hessian and are eliminated by a Schur complement.
void update_scales(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                   const std::vector<MarkerSequence>& sequences, const std::vector<std::vector<Pose>>& poses,
                   const ScalePrior& prior, const BilevelOptions& options, ScaleSet& scales, double& objective) {
  const int nb = skeleton.bones();
  const int ns = 3 * nb;
  const int M = markers.size();
  const double unit2 = options.residual_unit * options.residual_unit;
  const std::vector<Sample> samples = samples_of(sequences);
  const double sigma2 = prior.sigma * prior.sigma;

  auto flat = [nb](const BoneScales& s) {
    Eigen::VectorXd v(3 * nb);
    for (int b = 0; b < nb; ++b) v.segment<3>(3 * b) = s.row(b).transpose();
    return v;
  };

  for (int it = 0; it < options.scale_iterations; ++it) {
    // fixed chunking keeps the summation order independent of the thread count
    const int chunks = std::min<int>(16, static_cast<int>(samples.size()));
    std::vector<Eigen::MatrixXd> Hss(chunks), Hsd(chunks);
    std::vector<Eigen::VectorXd> gs(chunks), gd(chunks);
    const Placement placement = skeleton.placement(scales.s);
    parallel_for(chunks, [&](int c) {
      Hss[c].setZero(ns, ns);
      Hsd[c].setZero(ns, 3 * M);
      gs[c].setZero(ns);
      gd[c].setZero(3 * M);
      const size_t lo = samples.size() * c / chunks, hi = samples.size() * (c + 1) / chunks;
      for (size_t i = lo; i < hi; ++i) {
        const Sample& smp = samples[i];
        const Pose& pose = poses[smp.seq][smp.frame];
        const Points& target = sequences[smp.seq][smp.frame];
        Eigen::MatrixXd Js;
        const Points x = scaled_markers(skeleton, markers, beta, scales, pose, &Js);
        const FkResult<double> fk = forward_kinematics(skeleton.tree, pose, placement);
        for (int k = 0; k < M; ++k) {
          const double w = markers.markers[k].weight / unit2;
          const Mat3& R = fk.skel[markers.markers[k].bone].R;
          const Vec3 r = (x.row(k) - target.row(k)).transpose();
          const auto Jk = Js.middleRows<3>(3 * k);
          Hss[c].noalias() += w * Jk.transpose() * Jk;
          Hsd[c].middleCols<3>(3 * k).noalias() += w * Jk.transpose() * R;
          gs[c].noalias() += w * Jk.transpose() * r;
          gd[c].segment<3>(3 * k) += w * R.transpose() * r;
        }
      }
    });
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(ns, ns), C = Eigen::MatrixXd::Zero(ns, 3 * M);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ns), h = Eigen::VectorXd::Zero(3 * M);
    for (int c = 0; c < chunks; ++c) {
      H += Hss[c];
      C += Hsd[c];
      g += gs[c];
      h += gd[c];
    }
    const Eigen::VectorXd sv = flat(scales.s), mv = flat(prior.mean);
    H.diagonal().array() += options.prior_weight / sigma2;
    g += options.prior_weight * (sv - mv) / sigma2;
    // offsets: H_dd = c_k I with c_k = F * w_k + offset prior
    const double od = options.offset_sigma > 0 ? options.prior_weight / (options.offset_sigma * options.offset_sigma) : 0.0;
    Eigen::VectorXd cinv(3 * M);
    for (int k = 0; k < M; ++k) {
      const double c = markers.markers[k].weight * samples.size() / unit2 + od;
      cinv.segment<3>(3 * k).setConstant(c > 0 ? 1.0 / c : 0.0);
      h.segment<3>(3 * k) += od * scales.delta[k];
    }
    const Eigen::MatrixXd A = H - C * cinv.asDiagonal() * C.transpose();
    const Eigen::VectorXd rhs = -g + C * cinv.cwiseProduct(h);
    const Eigen::VectorXd ds = A.ldlt().solve(rhs);
    const Eigen::VectorXd dd = -cinv.cwiseProduct(h + C.transpose() * ds);
    if (!ds.allFinite() || !dd.allFinite()) return;

    bool accepted = false;
    double step = 1.0;
    for (int ls = 0; ls < 10 && !accepted; ++ls, step *= 0.5) {
      ScaleSet trial = scales;
      for (int b = 0; b < nb; ++b) {
        for (int a = 0; a < 3; ++a) {
          trial.s(b, a) = std::clamp(scales.s(b, a) + step * ds[3 * b + a], options.scale_lo, options.scale_hi);
        }
      }
      for (int k = 0; k < M; ++k) {
        Vec3 d = scales.delta[k] + step * dd.segment<3>(3 * k);
        if (d.norm() > options.offset_cap) d *= options.offset_cap / d.norm();
        trial.delta[k] = d;
      }
      const double obj = bilevel_objective(skeleton, markers, beta, sequences, trial, poses, prior, options);
      if (obj <= objective) {
        const double gain = objective - obj;
        scales = trial;
        objective = obj;
        accepted = true;
        if (gain <= 1e-12 * std::max(obj, 1e-300)) return;
      }
    }
    if (!accepted) return;
  }
}


// Damped Gauss-Newton on (s, delta, poses) together. Per-frame pose blocks are
// eliminated first (Schur complement), leaving a dense system in (s, delta).
void coupled_update(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                    const std::vector<MarkerSequence>& sequences, std::vector<std::vector<Pose>>& poses,
                    const ScalePrior& prior, const BilevelOptions& options, ScaleSet& scales, double& objective) {
  const KinematicTree& tree = skeleton.tree;
  const int nb = skeleton.bones();
  const int ns = 3 * nb;
  const int M = markers.size();
  const int nz = ns + 3 * M;
  const int ny = tree.dof_count() + 3;
  const double unit2 = options.residual_unit * options.residual_unit;
  const std::vector<Sample> samples = samples_of(sequences);
  const int F = static_cast<int>(samples.size());
  const double sigma2 = prior.sigma * prior.sigma;
  const double od = options.offset_sigma > 0 ? options.prior_weight / (options.offset_sigma * options.offset_sigma) : 0.0;
  Eigen::VectorXd ylo, yhi;
  pose_bounds(tree, ylo, yhi);

  std::vector<Eigen::MatrixXd> Ub(F);  // U_f^-1 B_f'
  std::vector<Eigen::VectorXd> Ug(F);  // U_f^-1 g_f
  std::vector<Eigen::MatrixXd> Uf(F), Bf(F);
  std::vector<Eigen::VectorXd> gy(F);
  double mu = 1e-4;
  for (int it = 0; it < options.scale_iterations; ++it) {
    const MarkerRig rig = make_marker_rig(skeleton, markers, scales, beta);
    const int chunks = std::min(16, F);
    std::vector<Eigen::MatrixXd> Vc(chunks);
    std::vector<Eigen::VectorXd> gc(chunks);
    parallel_for(chunks, [&](int c) {
      Vc[c].setZero(nz, nz);
      gc[c].setZero(nz);
      const int lo = F * c / chunks, hi = F * (c + 1) / chunks;
      for (int i = lo; i < hi; ++i) {
        const Sample& smp = samples[i];
        const Pose& pose = poses[smp.seq][smp.frame];
        const Points& target = sequences[smp.seq][smp.frame];
        Eigen::MatrixXd Js;
        const Points x = scaled_markers(skeleton, markers, beta, scales, pose, &Js);
        const Eigen::MatrixXd Jq = marker_jacobian(rig, pose);
        const FkResult<double> fk = forward_kinematics(tree, pose, rig.placement);
        Eigen::MatrixXd U = Eigen::MatrixXd::Zero(ny, ny), B = Eigen::MatrixXd::Zero(nz, ny);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(ny);
        for (int k = 0; k < M; ++k) {
          const double w = markers.markers[k].weight / unit2;
          const Mat3& R = fk.skel[markers.markers[k].bone].R;
          const Vec3 r = (x.row(k) - target.row(k)).transpose();
          const auto Jsk = Js.middleRows<3>(3 * k);
          const auto Jqk = Jq.middleRows<3>(3 * k);
          U.noalias() += w * Jqk.transpose() * Jqk;
          g.noalias() += w * Jqk.transpose() * r;
          B.topRows(ns).noalias() += w * Jsk.transpose() * Jqk;
          B.middleRows<3>(ns + 3 * k).noalias() += w * R.transpose() * Jqk;
          Vc[c].topLeftCorner(ns, ns).noalias() += w * Jsk.transpose() * Jsk;
          Vc[c].block(0, ns + 3 * k, ns, 3).noalias() += w * Jsk.transpose() * R;
          Vc[c].block<3, 3>(ns + 3 * k, ns + 3 * k).diagonal().array() += w;
          gc[c].head(ns).noalias() += w * Jsk.transpose() * r;
          gc[c].segment<3>(ns + 3 * k).noalias() += w * R.transpose() * r;
        }
        Uf[i] = U;
        Bf[i] = B;
        gy[i] = g;
      }
    });
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(nz, nz);
    Eigen::VectorXd gz = Eigen::VectorXd::Zero(nz);
    for (int c = 0; c < chunks; ++c) {
      V += Vc[c];
      gz += gc[c];
    }
    V.topRightCorner(ns, 3 * M) = V.block(0, ns, ns, 3 * M);
    V.bottomLeftCorner(3 * M, ns) = V.topRightCorner(ns, 3 * M).transpose();
    for (int b = 0; b < nb; ++b) {
      for (int a = 0; a < 3; ++a) {
        V(3 * b + a, 3 * b + a) += options.prior_weight / sigma2;
        gz[3 * b + a] += options.prior_weight * (scales.s(b, a) - prior.mean(b, a)) / sigma2;
      }
    }
    for (int k = 0; k < M; ++k) {
      V.block<3, 3>(ns + 3 * k, ns + 3 * k).diagonal().array() += od;
      gz.segment<3>(ns + 3 * k) += od * scales.delta[k];
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::MatrixXd S = V;
      S.diagonal() += mu * V.diagonal();
      Eigen::VectorXd rhs = -gz;
      const int chunks2 = std::min(16, F);
      std::vector<Eigen::MatrixXd> Sc(chunks2);
      std::vector<Eigen::VectorXd> rc(chunks2);
      parallel_for(chunks2, [&](int c) {
        Sc[c].setZero(nz, nz);
        rc[c].setZero(nz);
        const int lo = F * c / chunks2, hi = F * (c + 1) / chunks2;
        for (int i = lo; i < hi; ++i) {
          Eigen::MatrixXd U = Uf[i];
          U.diagonal() += mu * Uf[i].diagonal() + Eigen::VectorXd::Constant(ny, 1e-12 * Uf[i].diagonal().maxCoeff());
          const Eigen::LDLT<Eigen::MatrixXd> ldlt(U);
          Ub[i] = ldlt.solve(Bf[i].transpose());
          Ug[i] = ldlt.solve(gy[i]);
          Sc[c].noalias() -= Bf[i] * Ub[i];
          rc[c].noalias() += Bf[i] * Ug[i];
        }
      });
      for (int c = 0; c < chunks2; ++c) {
        S += Sc[c];
        rhs += rc[c];
      }
      const Eigen::VectorXd dz = S.ldlt().solve(rhs);
      if (!dz.allFinite()) {
        mu *= 10;
        continue;
      }
      ScaleSet trial = scales;
      for (int b = 0; b < nb; ++b) {
        for (int a = 0; a < 3; ++a) {
          trial.s(b, a) = std::clamp(scales.s(b, a) + dz[3 * b + a], options.scale_lo, options.scale_hi);
        }
      }
      for (int k = 0; k < M; ++k) {
        Vec3 d = scales.delta[k] + dz.segment<3>(ns + 3 * k);
        if (d.norm() > options.offset_cap) d *= options.offset_cap / d.norm();
        trial.delta[k] = d;
      }
      std::vector<std::vector<Pose>> tp = poses;
      for (int i = 0; i < F; ++i) {
        const Eigen::VectorXd dy = -(Ug[i] + Ub[i] * dz);
        Eigen::VectorXd y = pose_to_vector(poses[samples[i].seq][samples[i].frame]) + dy;
        y = y.cwiseMax(ylo).cwiseMin(yhi);
        tp[samples[i].seq][samples[i].frame] = pose_from_vector(y, tree.dof_count());
      }
      const double obj = bilevel_objective(skeleton, markers, beta, sequences, trial, tp, prior, options);
      if (obj <= objective) {
        const double gain = objective - obj;
        scales = trial;
        poses = std::move(tp);
        objective = obj;
        accepted = true;
        mu = std::max(mu * 0.3, 1e-8);
        if (gain <= 1e-10 * std::max(obj, 1e-300)) return;
      } else {
        mu *= 4;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace

BilevelResult bilevel_fit(const SkeletonTemplate& skeleton, const MarkerSet& markers, const Eigen::VectorXd& beta,
                          const std::vector<MarkerSequence>& sequences, const ScalePrior& prior,
                          const BilevelOptions& options) {
  if (sequences.empty()) fail(ErrorCode::InsufficientData, "need at least one sequence");
  if (prior.mean.rows() != skeleton.bones()) fail(ErrorCode::DimensionMismatch, "prior must cover every bone");
  for (const auto& seq : sequences) {
    if (seq.empty()) fail(ErrorCode::InsufficientData, "empty marker sequence");
    for (const auto& f : seq) {
      if (f.rows() != markers.size()) fail(ErrorCode::ModelMarkerMismatch, "frame marker count does not match the set");
    }
  }
  for (const auto& m : markers.markers) {
    if (m.bone < 0 || m.bone >= skeleton.bones()) fail(ErrorCode::ModelMarkerMismatch, "marker '" + m.name + "' has no bone");
  }
  const int dofs = skeleton.tree.dof_count();
  const std::vector<Sample> samples = samples_of(sequences);

  BilevelResult out;
  out.scales = ScaleSet{prior.mean, std::vector<Vec3>(markers.size(), Vec3::Zero())};
  for (int b = 0; b < skeleton.bones(); ++b) {
    for (int a = 0; a < 3; ++a) out.scales.s(b, a) = std::clamp(out.scales.s(b, a), options.scale_lo, options.scale_hi);
  }
  out.poses.resize(sequences.size());
  std::vector<FrameFit> status(samples.size());

  // initial poses: warm-started along each sequence
  {
    const MarkerRig rig = make_marker_rig(skeleton, markers, out.scales, beta);
    for (size_t s = 0; s < sequences.size(); ++s) {
      Pose prev = align_root(rig, sequences[s][0], Pose::zero(dofs));
      for (const Points& target : sequences[s]) {
        const IkResult r = ik_solve_frame(rig, target, prev, options.ik);
        out.poses[s].push_back(r.pose);
        prev = r.pose;
      }
    }
  }
  double objective = bilevel_objective(skeleton, markers, beta, sequences, out.scales, out.poses, prior, options);
  out.report.objective.push_back(objective);

  for (int round = 0; round < options.max_rounds; ++round) {
    const double before = objective;
    if (options.coupled_step) {
      coupled_update(skeleton, markers, beta, sequences, out.poses, prior, options, out.scales, objective);
    } else {
      update_scales(skeleton, markers, beta, sequences, out.poses, prior, options, out.scales, objective);
    }
    const MarkerRig rig = make_marker_rig(skeleton, markers, out.scales, beta);
    std::vector<Pose> solved(samples.size());
    parallel_for(static_cast<int>(samples.size()), [&](int i) {
      const Sample& smp = samples[i];
      const IkResult r = ik_solve_frame(rig, sequences[smp.seq][smp.frame], out.poses[smp.seq][smp.frame], options.ik);
      solved[i] = r.pose;
      status[i].iterations = r.iterations;
      status[i].converged = r.converged;
    });
    for (size_t i = 0; i < samples.size(); ++i) out.poses[samples[i].seq][samples[i].frame] = solved[i];
    objective = bilevel_objective(skeleton, markers, beta, sequences, out.scales, out.poses, prior, options);
    out.report.objective.push_back(objective);
    out.report.rounds = round + 1;
    if (objective > before * (1 + 1e-12)) out.report.monotone = false;
    if (before - objective < options.relative_tolerance * before) {
      out.report.converged = true;
      break;
    }
  }

  const MarkerRig rig = make_marker_rig(skeleton, markers, out.scales, beta);
  out.report.frames.resize(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& smp = samples[i];
    FrameFit f = marker_errors(markers, rig_markers(rig, out.poses[smp.seq][smp.frame]), sequences[smp.seq][smp.frame]);
    f.iterations = status[i].iterations;
    f.converged = status[i].converged;
    out.report.frames[i] = f;
  }
  return out;
}

}  // namespace skelrig
