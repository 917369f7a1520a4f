#include "skelrig/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "skelrig/parallel.hpp"

namespace skelrig {

namespace fs = std::filesystem;
using nlohmann::json;

ScalePrior subject_prior(const EnvelopeModel& envelope, const Eigen::VectorXd& beta, const PipelineConfig& config) {
  const Mesh shaped{envelope_shape(envelope, beta), envelope.mesh.faces};
  const HeightWeight hw = estimate_height_weight(shaped, config.density);
  const HeightWeight ref = estimate_height_weight(envelope.mesh, config.density);
  return ScalePrior::from_height(envelope.skeleton.bones(), hw.height, ref.height, config.prior_sigma);
}

SubjectFit fit_subject(const EnvelopeModel& envelope, const SubjectData& subject, const PipelineConfig& config) {
  const ScalePrior prior = subject_prior(envelope, subject.beta, config);
  BilevelResult r = bilevel_fit(envelope.skeleton, envelope.markers, subject.beta, {subject.markers}, prior, config.fit);
  return SubjectFit{std::move(r.scales), std::move(r.poses.at(0)), std::move(r.report)};
}

void apply_fit(const EnvelopeModel& envelope, const SubjectFit& fit, SubjectData& subject) {
  if (fit.poses.size() != subject.poses.size()) fail(ErrorCode::DimensionMismatch, "fit and subject differ in frame count");
  const KinematicTree& tree = envelope.skeleton.tree;
  const Placement pl = envelope.skeleton.placement(fit.scales.s);
  subject.scales = fit.scales.s;
  for (size_t f = 0; f < fit.poses.size(); ++f) {
    const FkResult<double> fk = forward_kinematics(tree, fit.poses[f], pl);
    for (int i = 0; i < tree.size(); ++i) {
      subject.joints[f].row(i) = fk.skel[i].t.transpose();
      subject.bone_rotations[f][i] = fk.skel[i].R;
    }
  }
}

RegressorSplit regressor_split(const PairedDataset& data, int holdout_every) {
  RegressorSplit split;
  for (size_t s = 0; s < data.subjects.size(); ++s) {
    const SubjectData& sd = data.subjects[s];
    if (sd.vertices.size() != sd.joints.size()) fail(ErrorCode::InsufficientData, "dataset was read without vertices");
    for (int f = 0; f < sd.frames(); ++f) {
      const RegressorFrame fr{&sd.vertices[f], &sd.joints[f], static_cast<int>(s)};
      const bool held = holdout_every > 1 && f % holdout_every == holdout_every - 1;
      (held ? split.test : split.train).push_back(fr);
    }
  }
  return split;
}

JointRegressor train_regressor_stage(const PairedDataset& data, const PipelineConfig& config, RegressorReport* report) {
  return train_joint_regressor(regressor_split(data, config.holdout_every).train, config.regressor, report);
}

std::vector<Rotation> learn_orientation_stage(const PairedDataset& data) {
  if (data.subjects.empty()) fail(ErrorCode::InsufficientData, "no subjects");
  const int bones = static_cast<int>(data.subjects[0].bone_rotations.at(0).size());
  std::vector<Rotation> base(bones);
  parallel_for(bones, [&](int b) {
    std::vector<RotationPair> pairs;
    for (const SubjectData& sd : data.subjects) {
      for (int f = 0; f < sd.frames(); ++f) pairs.emplace_back(sd.envelope_rotations[f][b], sd.bone_rotations[f][b]);
    }
    base[b] = learn_base_rotation(pairs);
  });
  return base;
}

JointError joint_error(const JointRegressor& regressor, const std::vector<RegressorFrame>& frames) {
  JointError e;
  long n = 0;
  for (const RegressorFrame& fr : frames) {
    const Points J = regress_joints(regressor, *fr.vertices);
    for (Eigen::Index i = 0; i < J.rows(); ++i) {
      const double d = (J.row(i) - fr.joints->row(i)).norm();
      e.rms += d * d;
      e.mean += d;
      e.max = std::max(e.max, d);
      ++n;
    }
  }
  if (n) {
    e.rms = std::sqrt(e.rms / n);
    e.mean /= n;
  }
  return e;
}

std::vector<SubjectFit> load_fits(const std::string& fits_dir, int subjects) {
  std::vector<SubjectFit> fits;
  for (int s = 0; s < subjects; ++s) {
    const std::string sub = subject_dir(fits_dir, s);
    SubjectFit fit;
    fit.scales = parse_scales_json(read_file(sub + "/scales.json"));
    fit.poses = load_motion(sub + "/motion.csv").poses;
    fits.push_back(std::move(fit));
  }
  return fits;
}

namespace {

std::string out_path(const CommandContext& ctx, const std::string& fallback) {
  return ctx.out.empty() ? fallback : ctx.out;
}

struct LoadedDataset {
  DatasetManifest manifest;
  EnvelopeModel envelope;
  PairedDataset data;
};

LoadedDataset load_dataset(const std::string& dir, bool with_vertices, const std::string& fits) {
  LoadedDataset d;
  d.manifest = read_manifest(dir);
  d.envelope = build_envelope(d.manifest.envelope);
  if (d.envelope.markers.count(MarkerClass::Bony) != d.manifest.bony_markers ||
      d.envelope.markers.count(MarkerClass::Soft) != d.manifest.soft_markers ||
      d.envelope.mesh.vertex_count() != d.manifest.vertices) {
    fail(ErrorCode::ModelMarkerMismatch, "dataset manifest does not match its envelope model");
  }
  d.data = read_dataset(dir, with_vertices);
  if (!fits.empty()) {
    const std::vector<SubjectFit> f = load_fits(fits, static_cast<int>(d.data.subjects.size()));
    for (size_t s = 0; s < f.size(); ++s) apply_fit(d.envelope, f[s], d.data.subjects[s]);
  }
  return d;
}

Eigen::VectorXd parse_beta(const std::string& text, int dims) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dims);
  if (text.empty()) return beta;
  std::stringstream ss(text);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= dims) fail(ErrorCode::DimensionMismatch, "too many beta entries");
    try {
      beta[i++] = std::stod(tok);
    } catch (const std::exception&) {
      fail(ErrorCode::FormatError, "bad beta entry '" + tok + "'");
    }
  }
  return beta;
}

std::vector<Points> load_targets(const std::string& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".obj") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<Points> out;
    for (const auto& f : files) out.push_back(read_obj(f).vertices);
    return out;
  }
  return unpack_frames(read_file(path));
}

}  // namespace

int command_gen(const CommandContext& ctx) {
  const EnvelopeModel envelope = build_envelope(ctx.config.envelope);
  const PairedDataset data = generate_dataset(envelope, ctx.config.dataset);
  const std::string dir = out_path(ctx, "dataset");
  write_dataset(dir, data, ctx.config.envelope, envelope);
  std::cout << fmt::format("wrote {} subjects x {} frames to {}\n", data.subjects.size(), ctx.config.dataset.frames, dir);
  return 0;
}

int command_fit_markers(const CommandContext& ctx, const std::string& dataset) {
  const LoadedDataset d = load_dataset(dataset, false, "");
  const std::string dir = out_path(ctx, "fits");
  PipelineConfig cfg = ctx.config;
  std::vector<SubjectFit> fits;
  bool ok = true;
  json summary = json::array();
  const std::string hash = skeleton_hash(d.envelope.skeleton);
  for (size_t s = 0; s < d.data.subjects.size(); ++s) {
    const SubjectData& sd = d.data.subjects[s];
    SubjectFit fit = fit_subject(d.envelope, sd, cfg);
    const std::string sub = subject_dir(dir, static_cast<int>(s));
    write_file_atomic(sub + "/scales.json", format_scales_json(fit, static_cast<int>(s)));
    save_motion(sub + "/motion.csv",
                MotionFile{hash, d.manifest.dataset.frame_rate, sd.beta, d.envelope.skeleton.tree.dof_names(), fit.poses});
    int unconverged = 0;
    for (const FrameFit& f : fit.report.frames) unconverged += f.converged ? 0 : 1;
    ok = ok && fit.report.converged && unconverged == 0;
    summary.push_back({{"subject", s},
                       {"bony_mae_cm", 100 * fit.report.mean_bony_mae()},
                       {"soft_mae_cm", 100 * fit.report.mean_soft_mae()},
                       {"rounds", fit.report.rounds},
                       {"converged", fit.report.converged},
                       {"monotone", fit.report.monotone},
                       {"unconverged_frames", unconverged}});
    std::cout << fmt::format("subject {}: bony {:.4f} cm, soft {:.4f} cm, {} rounds{}\n", s,
                             100 * fit.report.mean_bony_mae(), 100 * fit.report.mean_soft_mae(), fit.report.rounds,
                             fit.report.converged ? "" : " (not converged)");
    fits.push_back(std::move(fit));
  }
  write_file_atomic(dir + "/report.csv", format_marker_report(fits));
  const json report{{"subjects", summary},
                    {"reference_only", {{"note", "real-data marker MAE, not comparable to synthetic data"},
                                        {"bony_mae_cm", 1.54},
                                        {"soft_mae_cm", 2.00}}}};
  write_file_atomic(dir + "/report.json", report.dump(1) + "\n");
  return ok ? 0 : 1;
}

int command_train_regressor(const CommandContext& ctx, const std::string& dataset, const std::string& fits) {
  const LoadedDataset d = load_dataset(dataset, true, fits);
  RegressorReport rep;
  const JointRegressor reg = train_regressor_stage(d.data, ctx.config, &rep);
  const std::string path = out_path(ctx, "regressor.json");
  write_file_atomic(path, format_regressor_json(reg, rep));
  const JointError e = joint_error(reg, regressor_split(d.data, ctx.config.holdout_every).test);
  std::cout << fmt::format("regressor: train rms {:.3f} mm, held-out rms {:.3f} mm, max {:.3f} mm -> {}\n",
                           1000 * rep.rms_residual, 1000 * e.rms, 1000 * e.max, path);
  return rep.converged ? 0 : 1;
}

int command_learn_orientation(const CommandContext& ctx, const std::string& dataset, const std::string& fits) {
  const LoadedDataset d = load_dataset(dataset, false, fits);
  const std::vector<Rotation> base = learn_orientation_stage(d.data);
  const std::string path = out_path(ctx, "orientation.json");
  write_file_atomic(path, format_orientation_json(base));
  std::cout << fmt::format("learned {} base rotations -> {}\n", base.size(), path);
  return 0;
}

int command_build(const CommandContext& ctx, const std::string& dataset, const std::string& fits,
                  const std::string& regressor, const std::string& orientation) {
  const LoadedDataset d = load_dataset(dataset, regressor.empty(), fits);
  bool ok = true;
  JointRegressor reg;
  if (regressor.empty()) {
    RegressorReport rep;
    reg = train_regressor_stage(d.data, ctx.config, &rep);
    ok = rep.converged;
    const JointError e = joint_error(reg, regressor_split(d.data, ctx.config.holdout_every).test);
    std::cout << fmt::format("regressor held-out rms {:.3f} mm\n", 1000 * e.rms);
  } else {
    reg = parse_regressor_json(read_file(regressor));
  }
  const std::vector<Rotation> base =
      orientation.empty() ? learn_orientation_stage(d.data) : parse_orientation_json(read_file(orientation));
  SkelModel model = assemble_skel_model(d.envelope, d.envelope.skeleton, reg, base);
  model.limit_policy = ctx.config.limit_policy;
  skel_forward(model, Eigen::VectorXd::Zero(model.shape_dims()), Pose::zero(model.tree.dof_count()));
  const std::string path = out_path(ctx, "model.json");
  const std::string text = serialize_model(model);
  write_file_atomic(path, text);
  std::cout << fmt::format("model {} ({} DOFs, {} bones) -> {}\n", sha256_hex(text), model.tree.dof_count(),
                           model.bones(), path);
  return ok ? 0 : 1;
}

int command_fit_mesh(const CommandContext& ctx, const MeshFitInputs& in) {
  const SkelModel model = load_model(in.model);
  std::vector<Points> targets;
  Eigen::VectorXd beta;
  double frame_rate = 30.0;
  if (!in.dataset.empty()) {
    const PairedDataset data = read_dataset(in.dataset, true);
    if (in.subject < 0 || in.subject >= static_cast<int>(data.subjects.size())) {
      fail(ErrorCode::ConfigError, "subject index out of range");
    }
    targets = data.subjects[in.subject].vertices;
    beta = data.subjects[in.subject].beta;
    frame_rate = data.config.frame_rate;
  } else if (!in.targets.empty()) {
    targets = load_targets(in.targets);
    beta = parse_beta(in.beta, model.shape_dims());
  } else {
    fail(ErrorCode::ConfigError, "fit-mesh needs --dataset or --targets");
  }
  if (ctx.config.mesh_frames > 0 && static_cast<int>(targets.size()) > ctx.config.mesh_frames) {
    targets.resize(ctx.config.mesh_frames);
  }
  if (targets.empty()) fail(ErrorCode::InsufficientData, "no target frames");
  const MeshFitResult r = fit_skel_to_mesh(model, beta, targets, ctx.config.mesh_fit);
  const std::string dir = out_path(ctx, "meshfit");
  save_motion(dir + "/motion.csv", MotionFile{model_hash(model), frame_rate, beta, model.tree.dof_names(), r.poses});
  std::vector<double> mean, max;
  std::vector<int> iters;
  std::vector<bool> conv;
  bool ok = true;
  for (const MeshFitFrame& f : r.frames) {
    mean.push_back(f.mean_v2v);
    max.push_back(f.max_v2v);
    iters.push_back(f.iterations);
    conv.push_back(f.converged);
    ok = ok && f.converged;
  }
  write_file_atomic(dir + "/report.csv", format_mesh_report(mean, max, iters, conv));
  const json report{{"frames", r.frames.size()},
                    {"mean_v2v_cm", 100 * r.mean_v2v()},
                    {"max_v2v_cm", 100 * r.mean_max_v2v()},
                    {"reference_only", {{"note", "real-data body model comparison, not comparable to synthetic data"},
                                        {"mean_v2v_cm", 1.1},
                                        {"max_v2v_cm", 2.5}}}};
  write_file_atomic(dir + "/report.json", report.dump(1) + "\n");
  std::cout << fmt::format("fit {} frames: mean {:.4f} cm, max {:.4f} cm\n", r.frames.size(), 100 * r.mean_v2v(),
                           100 * r.mean_max_v2v());
  return ok ? 0 : 1;
}

int command_export(const CommandContext& ctx, const std::string& model_path, const std::string& motion_path,
                   const std::string& what) {
  if (what != "skin" && what != "skeleton" && what != "both") fail(ErrorCode::ConfigError, "--what must be skin, skeleton or both");
  const SkelModel model = load_model(model_path);
  const MotionFile motion = load_motion(motion_path);
  if (motion.model_hash != model_hash(model)) fail(ErrorCode::HashMismatch, "motion was produced for a different model");
  if (motion.dof_names != model.tree.dof_names()) fail(ErrorCode::DimensionMismatch, "motion DOF names differ from the model");
  Eigen::VectorXd beta = motion.beta.size() ? motion.beta : Eigen::VectorXd::Zero(model.shape_dims());
  const SkelShape shape = prepare_shape(model, beta);
  const std::string dir = out_path(ctx, "export");
  for (size_t f = 0; f < motion.poses.size(); ++f) {
    const SkelOutput o = skel_forward(model, shape, motion.poses[f]);
    for (const char* kind : {"skin", "skeleton"}) {
      if (what != "both" && what != kind) continue;
      std::ostringstream os;
      write_obj(os, std::string(kind) == "skin" ? o.skin : o.skeleton);
      write_file_atomic(fmt::format("{}/frame_{:04d}_{}.obj", dir, f, kind), os.str());
    }
  }
  std::cout << fmt::format("exported {} frames to {}\n", motion.poses.size(), dir);
  return 0;
}

int command_report(const CommandContext& ctx, const std::string& model_path, const std::string& input) {
  std::string out;
  if (!model_path.empty()) {
    const SkelModel model = load_model(model_path);
    out += "index,name,joint,kind,lo,hi\n";
    for (const DofRow& r : joint_ranges_report(model)) {
      out += fmt::format("{},{},{},{},{:.6f},{:.6f}\n", r.index, r.name, r.joint, to_string(r.kind), r.lo, r.hi);
    }
  }
  if (!input.empty()) {
    const std::string csv = fs::is_directory(input) ? input + "/report.csv" : input;
    const CsvTable t = parse_csv(read_file(csv));
    out += "column,mean,max,frames\n";
    for (size_t c = 0; c < t.header.size(); ++c) {
      const std::string& h = t.header[c];
      if (h.size() < 3 || h.compare(h.size() - 3, 3, "_cm") != 0) continue;
      double sum = 0, mx = 0;
      for (const auto& row : t.rows) {
        const double v = std::stod(row[c]);
        sum += v;
        mx = std::max(mx, v);
      }
      out += fmt::format("{},{:.6f},{:.6f},{}\n", h, t.rows.empty() ? 0.0 : sum / t.rows.size(), mx, t.rows.size());
    }
  }
  if (model_path.empty() && input.empty()) fail(ErrorCode::ConfigError, "report needs --model or --input");
  if (ctx.out.empty()) {
    std::cout << out;
  } else {
    write_file_atomic(ctx.out, out);
  }
  return 0;
}

}  // namespace skelrig
