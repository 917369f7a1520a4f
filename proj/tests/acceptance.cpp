// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance --work DIR --cli PATH_TO_SKELRIG
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "oracles.hpp"
#include "skelrig/envelope.hpp"
#include "skelrig/io.hpp"
#include "skelrig/nnls.hpp"
#include "skelrig/pipeline.hpp"

using namespace skelrig;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget;  // seconds
  Outcome outcome;
  double seconds = 0;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Eigen::VectorXd flat(const Points& p) {
  Eigen::VectorXd v(p.size());
  for (Eigen::Index i = 0; i < p.rows(); ++i) v.segment<3>(3 * i) = p.row(i).transpose();
  return v;
}

Placement random_placement(const KinematicTree& tree, std::mt19937_64& rng) {
  Placement p;
  for (int i = 0; i < tree.size(); ++i) {
    p.rotation.push_back(oracle::random_rotation(rng));
    p.joint.push_back(tree.joint(i).rest_joint);
  }
  return p;
}

// ---------------------------------------------------------------------------

Outcome spine_identity() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.5, 1.5), len(0.01, 1.0);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 q(u(rng), u(rng), u(rng));
    const double l = len(rng);
    const double s = std::sqrt(std::pow(std::sin(q[1]), 2) + std::pow(std::cos(q[1]) * std::sin(q[0]), 2));
    const double alpha = std::asin(std::min(1.0, s));
    const double chord = alpha < 1e-12 ? l : 2 * (l / alpha) * std::sin(alpha / 2);
    worst = std::max(worst, std::abs(spine_translation(q, l).norm() - chord));
  }
  // both sides of the small-angle switch
  double jump = 0;
  for (double l : {0.05, 0.3, 1.0}) {
    for (double eps : {1e-14, 1e-13, 1e-12}) {
      const Vec3 lo = spine_translation(Vec3(0, 1e-6 - eps, 0.2), l), hi = spine_translation(Vec3(0, 1e-6 + eps, 0.2), l);
      jump = std::max(jump, (lo - hi).norm());
      const Vec3 mixed_lo = spine_translation(Vec3((1e-6 - eps) / std::sqrt(2.0), (1e-6 - eps) / std::sqrt(2.0), 0), l);
      const Vec3 mixed_hi = spine_translation(Vec3((1e-6 + eps) / std::sqrt(2.0), (1e-6 + eps) / std::sqrt(2.0), 0), l);
      jump = std::max(jump, (mixed_lo - mixed_hi).norm());
    }
  }
  return {worst < 1e-9 && jump < 1e-9, fmt::format("chord max err {:.2e}, branch jump {:.2e}", worst, jump)};
}

Outcome fk_oracle() {
  const KinematicTree tree = default_tree();
  std::mt19937_64 rng(102);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Placement pl = random_placement(tree, rng);
    const Pose pose = oracle::random_pose(tree, rng);
    const FkResult<double> fk = forward_kinematics(tree, pose, pl);
    const oracle::NaiveFk ref = oracle::naive_fk(tree, pose, pl);
    for (int k = 0; k < tree.size(); ++k) {
      worst = std::max(worst, (fk.skin[k].matrix() - ref.skin[k]).cwiseAbs().maxCoeff());
      worst = std::max(worst, (fk.skel[k].matrix() - ref.skel[k]).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-10, fmt::format("max entry err {:.2e} over 1000 poses", worst)};
}

Outcome base_rotation() {
  std::mt19937_64 rng(103);
  const Mat3 truth = oracle::random_rotation(rng);
  std::vector<RotationPair> exact, noisy;
  std::normal_distribution<double> g(0, 1e-3 / std::sqrt(3.0));
  for (int f = 0; f < 50; ++f) {
    const Mat3 rs = oracle::random_rotation(rng);
    exact.emplace_back(rs, rs * truth);
    noisy.emplace_back(rs, rs * truth * rotation_exp(Vec3(g(rng), g(rng), g(rng))));
  }
  const double e0 = (learn_base_rotation(exact).matrix() - truth).norm();
  const double e1 = (learn_base_rotation(noisy).matrix() - truth).norm();
  return {e0 < 1e-10 && e1 < 5e-3, fmt::format("planted err {:.2e}, perturbed err {:.2e}", e0, e1)};
}

Outcome regressor_suite(const PairedDataset& data, const std::vector<SubjectFit>& fits, const SkelModel& model,
                        const EnvelopeModel& env) {
  // rigid equivariance of the pipeline regressor
  std::mt19937_64 rng(104);
  double equi = 0;
  for (int i = 0; i < 20; ++i) {
    const Points& V = data.subjects[i % data.subjects.size()].vertices[7 * i];
    const Mat3 R = oracle::random_rotation(rng);
    const Vec3 t = Vec3::Random();
    const Points moved = (V * R.transpose()).rowwise() + t.transpose();
    const Points expect = (regress_joints(model.regressor, V) * R.transpose()).rowwise() + t.transpose();
    equi = std::max(equi, (regress_joints(model.regressor, moved) - expect).cwiseAbs().maxCoeff());
  }

  // planted convex combinations of the six vertices closest on average
  const int J = env.skeleton.bones();
  const Eigen::Index N = env.mesh.vertex_count();
  std::vector<std::vector<std::pair<int, double>>> planted(J);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int j = 0; j < J; ++j) {
    std::vector<std::pair<double, int>> dist;
    for (Eigen::Index v = 0; v < N; ++v) {
      double d = 0;
      for (const SubjectData& s : data.subjects) {
        for (int f = 0; f < s.frames(); ++f) d += (s.vertices[f].row(v) - s.joints[f].row(j)).norm();
      }
      dist.emplace_back(d, static_cast<int>(v));
    }
    std::partial_sort(dist.begin(), dist.begin() + 6, dist.end());
    double total = 0;
    for (int i = 0; i < 6; ++i) {
      planted[j].emplace_back(dist[i].second, u(rng));
      total += planted[j].back().second;
    }
    for (auto& e : planted[j]) e.second /= total;
  }
  std::vector<std::vector<Points>> targets(data.subjects.size());
  std::vector<RegressorFrame> train, test;
  for (size_t s = 0; s < data.subjects.size(); ++s) {
    const SubjectData& sd = data.subjects[s];
    for (int f = 0; f < sd.frames(); ++f) {
      Points t = Points::Zero(J, 3);
      for (int j = 0; j < J; ++j) {
        for (const auto& [v, w] : planted[j]) t.row(j) += w * sd.vertices[f].row(v);
      }
      targets[s].push_back(t);
    }
  }
  for (size_t s = 0; s < data.subjects.size(); ++s) {
    for (int f = 0; f < data.subjects[s].frames(); ++f) {
      (f % 5 == 4 ? test : train).push_back({&data.subjects[s].vertices[f], &targets[s][f], static_cast<int>(s)});
    }
  }
  const JointRegressor W = train_joint_regressor(train);
  double recovery = 0;
  for (const RegressorFrame& fr : test) {
    recovery = std::max(recovery, (regress_joints(W, *fr.vertices) - *fr.joints).rowwise().norm().maxCoeff());
  }

  // pipeline: train on the marker-fitted skeletons, test against ground truth
  const auto t0 = Clock::now();
  PairedDataset fitted = data;
  for (size_t s = 0; s < fits.size(); ++s) apply_fit(env, fits[s], fitted.subjects[s]);
  const PipelineConfig config;
  const JointRegressor P = train_regressor_stage(fitted, config);
  const JointError err = joint_error(P, regressor_split(data, config.holdout_every).test);
  const double pipeline_seconds = since(t0);
  double height = 1e9;
  for (const SubjectData& s : data.subjects) height = std::min(height, s.height);
  const double pct = 100 * err.rms / height;

  const bool pass = equi < 1e-12 && recovery < 1e-6 && pct < 1.0;
  return {pass, fmt::format("equivariance {:.2e}, planted held-out {:.2e} m, pipeline held-out rms {:.2f} mm "
                            "(max {:.2f} mm) = {:.3f}% of height, {:.1f} s",
                            equi, recovery, 1000 * err.rms, 1000 * err.max, pct, pipeline_seconds)};
}

Outcome nnls_suite() {
  std::mt19937_64 rng(105);
  std::normal_distribution<double> g(0, 1);
  double obj = 0, kkt = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 8, m = 2 + static_cast<int>(rng() % 12);
    Eigen::MatrixXd A(m, n);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      b[i] = g(rng);
      for (int j = 0; j < n; ++j) A(i, j) = g(rng);
    }
    const NnlsResult r = nnls_solve(A, b);
    obj = std::max(obj, std::abs(r.objective - oracle::nnls_exhaustive(A, b)));
    const Eigen::VectorXd grad = A.transpose() * (A * r.x - b);
    for (int j = 0; j < n; ++j) {
      kkt = std::max(kkt, std::max(0.0, -r.x[j]));
      kkt = std::max(kkt, std::max(0.0, -grad[j]));
      if (r.x[j] > 0) kkt = std::max(kkt, std::abs(grad[j]));
    }
  }
  return {obj < 1e-9 && kkt < 1e-8, fmt::format("max objective gap {:.2e}, max KKT violation {:.2e}", obj, kkt)};
}

Outcome bilevel_round_trip(const PairedDataset& data, const EnvelopeModel& env) {
  const PipelineConfig config;
  double clean_mae = 0, worst_scale = 0, noisy_lo = 1e9, noisy_hi = 0;
  std::string worst_bone;
  std::mt19937_64 rng(106);
  std::normal_distribution<double> noise(0, 0.005);
  for (size_t s = 0; s < data.subjects.size(); ++s) {
    const SubjectData& sd = data.subjects[s];
    const MarkerRig rig = make_marker_rig(env.skeleton, env.markers,
                                          ScaleSet{sd.scales, std::vector<Vec3>(env.markers.size(), Vec3::Zero())}, sd.beta);
    MarkerSequence clean, noisy;
    for (const Pose& q : sd.poses) {
      clean.push_back(rig_markers(rig, q));
      Points n = clean.back();
      for (Eigen::Index i = 0; i < n.size(); ++i) n.data()[i] += noise(rng);
      noisy.push_back(n);
    }
    const ScalePrior prior = subject_prior(env, sd.beta, config);
    const BilevelResult a = bilevel_fit(env.skeleton, env.markers, sd.beta, {clean}, prior, config.fit);
    clean_mae = std::max(clean_mae, a.report.mean_bony_mae());
    for (int b = 0; b < env.skeleton.bones(); ++b) {
      const double rel = std::abs(a.scales.s(b, 1) / sd.scales(b, 1) - 1);
      if (rel > worst_scale) {
        worst_scale = rel;
        worst_bone = env.skeleton.tree.joint(b).name;
      }
    }
    const BilevelResult c = bilevel_fit(env.skeleton, env.markers, sd.beta, {noisy}, prior, config.fit);
    noisy_lo = std::min(noisy_lo, c.report.mean_bony_mae());
    noisy_hi = std::max(noisy_hi, c.report.mean_bony_mae());
  }
  const bool pass = clean_mae < 0.002 && worst_scale < 0.02 && noisy_lo >= 0.0025 && noisy_hi <= 0.010;
  return {pass, fmt::format("clean bony MAE {:.3f} mm, worst longitudinal scale err {:.2f}% ({}), "
                            "5 mm noise bony MAE {:.2f}-{:.2f} mm",
                            1000 * clean_mae, 100 * worst_scale, worst_bone, 1000 * noisy_lo, 1000 * noisy_hi)};
}

Outcome dual_rig(const SkelModel& model, const PairedDataset& data) {
  const KinematicTree& tree = model.tree;
  std::mt19937_64 rng(107);
  double fixed = 0;
  for (const SubjectData& sd : data.subjects) {
    const SkelShape shape = prepare_shape(model, sd.beta);
    const SkelOutput out = skel_forward(model, shape, Pose::zero(tree.dof_count()));
    fixed = std::max(fixed, (out.joints - regress_joints(model.regressor, out.skin.vertices)).cwiseAbs().maxCoeff());
  }

  const SkelShape shape = prepare_shape(model, data.subjects[0].beta);
  bool ulna_stable = true;
  int start = 0;
  std::map<int, std::pair<int, int>> ranges;
  for (int b = 0; b < model.bones(); ++b) {
    ranges[b] = {start, model.bone_meshes[b].vertex_count()};
    start += model.bone_meshes[b].vertex_count();
  }
  for (int trial = 0; trial < 20; ++trial) {
    Pose pose = oracle::random_pose(tree, rng);
    Points ref;
    for (double rho : {-1.5, -0.7, 0.0, 0.4, 1.5}) {
      for (const char* side : {"radius_r", "radius_l"}) pose.q[tree.joint(tree.find(side)).dof_offset] = rho;
      const Points v = skel_forward(model, shape, pose).skeleton.vertices;
      Points ulna(0, 3);
      for (const char* name : {"ulna_r", "ulna_l"}) {
        const auto [s0, n] = ranges[tree.find(name)];
        ulna.conservativeResize(ulna.rows() + n, 3);
        ulna.bottomRows(n) = v.middleRows(s0, n);
      }
      if (ref.size() == 0) ref = ulna;
      ulna_stable = ulna_stable && ulna == ref;
    }
  }

  double ellipsoid = 0;
  const Placement& pl = shape.placement.frames;
  for (const char* name : {"scapula_r", "scapula_l"}) {
    const int k = tree.find(name);
    const JointSpec& spec = tree.joint(k);
    const int p = spec.parent;
    const Mat3 rel = pl.rotation[p].transpose() * pl.rotation[k];
    const Vec3 d = pl.rotation[p].transpose() * (pl.joint[k] - pl.joint[p]);
    const Vec3 center = -(spec.ellipsoid_frame * Vec3(0, 0, spec.semi_axes.z()));
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 20; ++j) {
        Pose pose = oracle::random_pose(tree, rng);
        pose.q[spec.dof_offset] = -1.4 + 2.8 * i / 19.0;
        pose.q[spec.dof_offset + 1] = -1.4 + 2.8 * j / 19.0;
        const FkResult<double> fk = forward_kinematics(tree, pose, pl);
        const Vec3 y = fk.skel[p].inverse() * fk.skel[k].t;
        const Vec3 e = spec.ellipsoid_frame.transpose() * (rel.transpose() * (y - d) - center);
        const double rho = e.cwiseQuotient(spec.semi_axes).norm();
        ellipsoid = std::max(ellipsoid, (e - e / rho).norm());
      }
    }
  }

  double agree = 0;
  std::vector<Placement> bodies;
  for (const SubjectData& sd : data.subjects) bodies.push_back(prepare_shape(model, sd.beta).placement.frames);
  for (int i = 0; i < 1000; ++i) {
    const Placement& body = bodies[i % bodies.size()];
    const Pose pose = oracle::random_pose(tree, rng);
    const FkResult<double> fk = forward_kinematics(tree, pose, body);
    for (int b = 0; b < tree.size(); ++b) agree = std::max(agree, (fk.skin[b] * body.joint[b] - fk.skel[b].t).norm());
  }
  const bool pass = fixed < 1e-9 && ulna_stable && ellipsoid < 1e-6 && agree < 1e-9;
  return {pass, fmt::format("zero-pose fixed point {:.2e} m, ulna bit-stable {}, ellipsoid residual {:.2e} m, "
                            "skin/skeleton joints {:.2e} m",
                            fixed, ulna_stable ? "yes" : "no", ellipsoid, agree)};
}

Outcome mesh_round_trip(const SkelModel& model, const PairedDataset& data) {
  const Eigen::VectorXd beta = data.subjects[1].beta;
  const SkelShape shape = prepare_shape(model, beta);
  const std::vector<Pose> truth = sample_trajectory(model.tree, 50, 30.0, 1.0, 108);
  std::vector<Points> targets;
  for (const Pose& q : truth) targets.push_back(skel_forward(model, shape, q).skin.vertices);
  const MeshFitResult r = fit_skel_to_mesh(model, beta, targets);
  double dof = 0;
  for (size_t f = 0; f < truth.size(); ++f) dof = std::max(dof, (r.poses[f].q - truth[f].q).cwiseAbs().maxCoeff());
  const bool pass = r.mean_v2v() < 0.001 && dof < 0.02;
  return {pass, fmt::format("mean v2v {:.2e} mm, max DOF err {:.2e} rad over 50 frames", 1000 * r.mean_v2v(), dof)};
}

Outcome jacobian_audit(const SkelModel& model, const EnvelopeModel& env) {
  std::mt19937_64 rng(109);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> su(0.85, 1.15), du(-0.01, 0.01);
  const KinematicTree& tree = env.skeleton.tree;
  const int nb = env.skeleton.bones(), dofs = tree.dof_count();
  std::map<std::string, double> worst;
  auto record = [&](const std::string& k, double e) { worst[k] = std::max(worst[k], e); };
  auto random_beta = [&](int k) {
    Eigen::VectorXd b(k);
    for (int i = 0; i < k; ++i) b[i] = g(rng);
    return b;
  };
  auto random_scales = [&] {
    ScaleSet s = ScaleSet::ones(nb, env.markers.size());
    for (int i = 0; i < s.s.size(); ++i) s.s.data()[i] = su(rng);
    for (Vec3& d : s.delta) d = Vec3(du(rng), du(rng), du(rng));
    return s;
  };

  std::vector<SkelShape> shapes;
  for (int i = 0; i < 10; ++i) shapes.push_back(prepare_shape(model, random_beta(model.shape_dims())));

  for (int probe = 0; probe < 100; ++probe) {
    const Eigen::VectorXd beta = random_beta(env.shape_dims());
    const ScaleSet scales = random_scales();
    const Pose pose = oracle::random_pose(tree, rng);
    const Eigen::VectorXd x = pose_to_vector(pose);

    const MarkerRig rig = make_marker_rig(env.skeleton, env.markers, scales, beta);
    record("marker_jacobian",
           oracle::relative_error(marker_jacobian(rig, pose),
                                  oracle::central_difference(
                                      [&](const Eigen::VectorXd& v) { return flat(rig_markers(rig, pose_from_vector(v, dofs))); }, x)));

    Eigen::MatrixXd D;
    scaled_markers(env.skeleton, env.markers, beta, scales, pose, &D);
    Eigen::VectorXd sv(3 * nb);
    for (int b = 0; b < nb; ++b) sv.segment<3>(3 * b) = scales.s.row(b).transpose();
    record("scaled_markers d/ds", oracle::relative_error(D, oracle::central_difference(
                                                                [&](const Eigen::VectorXd& v) {
                                                                  ScaleSet t = scales;
                                                                  for (int b = 0; b < nb; ++b) t.s.row(b) = v.segment<3>(3 * b).transpose();
                                                                  return flat(scaled_markers(env.skeleton, env.markers, beta, t, pose));
                                                                },
                                                                sv)));

    const ScalePrior prior = ScalePrior::from_height(nb, 1.7 + 0.2 * g(rng), 1.8);
    BoneScales grad;
    scale_prior(scales.s, prior, &grad);
    Eigen::VectorXd gv(3 * nb);
    for (int b = 0; b < nb; ++b) gv.segment<3>(3 * b) = grad.row(b).transpose();
    record("scale_prior gradient",
           oracle::relative_error(gv.transpose(), oracle::central_difference(
                                                      [&](const Eigen::VectorXd& v) {
                                                        BoneScales t(nb, 3);
                                                        for (int b = 0; b < nb; ++b) t.row(b) = v.segment<3>(3 * b).transpose();
                                                        return Eigen::VectorXd::Constant(1, scale_prior(t, prior));
                                                      },
                                                      sv)));

    const Placement pl = env.skeleton.placement(scales.s);
    const FkResult<double> fk = forward_kinematics(tree, pose, pl);
    const std::vector<Twist> tw = dof_twists(tree, pose, pl, fk);
    const int bone = static_cast<int>(rng() % nb);
    const Vec3 local(du(rng) * 5, du(rng) * 5, du(rng) * 5);
    Eigen::MatrixXd T(3, dofs);
    T.setZero();
    for (int j : tree.chain(bone)) {
      for (int k = 0; k < tree.joint(j).dofs(); ++k) {
        const int d = tree.joint(j).dof_offset + k;
        T.col(d) = tw[d].apply(fk.skel[bone] * local);
      }
    }
    record("dof_twists", oracle::relative_error(T, oracle::central_difference(
                                                       [&](const Eigen::VectorXd& v) {
                                                         const Pose p{v, pose.trans};
                                                         return Eigen::VectorXd(forward_kinematics(tree, p, pl).skel[bone] * local);
                                                       },
                                                       pose.q)));

    {
      const SkelShape& shape = shapes[probe % shapes.size()];
      record("skin_jacobian",
             oracle::relative_error(skin_jacobian(model, shape, pose),
                                    oracle::central_difference(
                                        [&](const Eigen::VectorXd& v) {
                                          const Pose p = pose_from_vector(v, dofs);
                                          return flat(skel_skin_vertices(model, shape, p,
                                                                         forward_kinematics(model.tree, p, shape.placement.frames)));
                                        },
                                        x)));
    }
  }
  bool pass = true;
  std::string detail;
  for (const auto& [k, e] : worst) {
    pass = pass && e < 1e-5;
    detail += fmt::format("{}{} {:.1e}", detail.empty() ? "" : ", ", k, e);
  }
  return {pass, "worst relative err: " + detail};
}

// ---------------------------------------------------------------------------
// end-to-end CLI runs

int run(const std::string& cmd, const fs::path& log) {
  const int status = std::system((cmd + " >> " + log.string() + " 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_sha256(e.path().string());
  }
  return out;
}

Outcome pipeline_runs(const std::string& cli, const fs::path& work) {
  std::vector<std::map<std::string, std::string>> hashes;
  std::string codes;
  bool ok = true;
  for (int threads : {1, 2}) {
    const fs::path dir = work / fmt::format("run_threads{}", threads);
    const fs::path log = work / fmt::format("run_threads{}.log", threads);
    fs::remove_all(dir);
    fs::remove(log);
    fs::create_directories(dir);
    const std::string base = fmt::format("{} --seed 1 --threads {}", cli, threads);
    const std::vector<std::string> steps = {
        fmt::format("{} --out {}/dataset gen", base, dir.string()),
        fmt::format("{} --out {}/fits fit-markers --dataset {}/dataset", base, dir.string(), dir.string()),
        fmt::format("{} --out {}/model.json build --dataset {}/dataset --fits {}/fits", base, dir.string(), dir.string(),
                    dir.string()),
        fmt::format("{} --out {}/meshfit fit-mesh --model {}/model.json --dataset {}/dataset --subject 0 --frames 50", base,
                    dir.string(), dir.string(), dir.string()),
    };
    for (const std::string& s : steps) {
      const int code = run(s, log);
      codes += std::to_string(code);
      ok = ok && code == 0;
    }
    codes += threads == 1 ? "/" : "";
    hashes.push_back(hash_tree(dir));
  }
  const bool same = hashes[0] == hashes[1] && !hashes[0].empty();
  return {ok && same, fmt::format("{} files, hashes identical {}, exit codes {}", hashes[0].size(), same ? "yes" : "no", codes)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string work = "acceptance_work", cli;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--cli", cli, "path of the skelrig executable")->required();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  std::vector<Criterion> criteria = {
      {1, "spine chord identity and branch continuity", 1},
      {2, "forward kinematics against naive matrix chain", 10},
      {3, "base rotation planted recovery", 1},
      {4, "joint regressor equivariance and recovery", 60},
      {5, "NNLS against exhaustive enumeration", 10},
      {6, "bi-level marker fit round trip", 300},
      {7, "dual-rig invariants", 30},
      {8, "mesh fit round trip", 120},
      {9, "Jacobian audit", 30},
      {10, "end-to-end pipeline determinism", 600},
  };
  auto measure = [&](int id, const std::function<Outcome()>& f) {
    Criterion& c = criteria[id - 1];
    const auto t0 = Clock::now();
    try {
      c.outcome = f();
    } catch (const std::exception& e) {
      c.outcome = {false, std::string("exception: ") + e.what()};
    }
    c.seconds = since(t0);
    std::cerr << fmt::format("[{}] {} done in {:.1f} s\n", id, c.name, c.seconds);
  };

  // the pipeline run comes first; later criteria reuse its dataset, fits and model
  const fs::path root = fs::absolute(work);
  measure(10, [&] { return pipeline_runs(cli, root); });
  const fs::path run1 = root / "run_threads1";

  measure(1, spine_identity);
  measure(2, fk_oracle);
  measure(3, base_rotation);
  measure(5, nnls_suite);

  PairedDataset data;
  EnvelopeModel env;
  SkelModel model;
  std::vector<SubjectFit> fits;
  std::string load_error;
  try {
    data = read_dataset((run1 / "dataset").string());
    env = build_envelope(read_manifest((run1 / "dataset").string()).envelope);
    model = load_model((run1 / "model.json").string());
    fits = load_fits((run1 / "fits").string(), static_cast<int>(data.subjects.size()));
  } catch (const std::exception& e) {
    load_error = e.what();
  }
  auto needs_pipeline = [&](const std::function<Outcome()>& f) {
    return [&, f] { return load_error.empty() ? f() : Outcome{false, "pipeline outputs unavailable: " + load_error}; };
  };
  measure(4, needs_pipeline([&] { return regressor_suite(data, fits, model, env); }));
  measure(6, needs_pipeline([&] { return bilevel_round_trip(data, env); }));
  measure(7, needs_pipeline([&] { return dual_rig(model, data); }));
  measure(8, needs_pipeline([&] { return mesh_round_trip(model, data); }));
  measure(9, needs_pipeline([&] { return jacobian_audit(model, env); }));

  int failed = 0;
  for (const Criterion& c : criteria) {
    const bool in_time = c.seconds <= c.budget;
    const bool pass = c.outcome.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << fmt::format("{} {:2d} {}: {} [{:.1f} s, budget {:.0f} s{}]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                             c.outcome.detail, c.seconds, c.budget, in_time ? "" : ", over budget");
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
