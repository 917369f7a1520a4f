// skelrig command line: gen, fit-markers, train-regressor, learn-orientation,
// build, fit-mesh, export, report.
#include <iostream>

#include <CLI11.hpp>

#include "skelrig/parallel.hpp"
#include "skelrig/pipeline.hpp"

using namespace skelrig;

int main(int argc, char** argv) {
  CLI::App app{"skin-to-skeleton body model pipeline"};
  app.require_subcommand(1);

  std::string config_path, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "worker threads (0: hardware)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "output file or directory");

  int subjects = -1, frames = -1;
  double noise = -1;
  auto* gen = app.add_subcommand("gen", "generate a synthetic paired dataset");
  gen->add_option("--subjects", subjects)->check(CLI::PositiveNumber);
  gen->add_option("--frames", frames)->check(CLI::PositiveNumber);
  gen->add_option("--noise", noise)->check(CLI::NonNegativeNumber);

  std::string dataset, fits, regressor, orientation, model, motion, targets, beta, input, what = "both";
  int subject = 0, mesh_frames = -1;
  auto* fit_markers = app.add_subcommand("fit-markers", "bi-level marker fit of every subject");
  fit_markers->add_option("--dataset", dataset)->required();

  auto* train = app.add_subcommand("train-regressor", "train the anatomical joint regressor");
  train->add_option("--dataset", dataset)->required();
  train->add_option("--fits", fits, "fit-markers output (default: ground truth)");

  auto* learn = app.add_subcommand("learn-orientation", "learn per-bone base rotations");
  learn->add_option("--dataset", dataset)->required();
  learn->add_option("--fits", fits);

  auto* build = app.add_subcommand("build", "assemble and save the model");
  build->add_option("--dataset", dataset)->required();
  build->add_option("--fits", fits);
  build->add_option("--regressor", regressor);
  build->add_option("--orientation", orientation);

  auto* fit_mesh = app.add_subcommand("fit-mesh", "fit model poses to target skin meshes");
  fit_mesh->add_option("--model", model)->required();
  fit_mesh->add_option("--dataset", dataset);
  fit_mesh->add_option("--subject", subject);
  fit_mesh->add_option("--targets", targets, "packed frames file or directory of OBJ files");
  fit_mesh->add_option("--beta", beta, "comma separated shape coefficients");
  fit_mesh->add_option("--frames", mesh_frames)->check(CLI::NonNegativeNumber);

  auto* exp = app.add_subcommand("export", "write posed meshes as OBJ");
  exp->add_option("--model", model)->required();
  exp->add_option("--motion", motion)->required();
  exp->add_option("--what", what)->check(CLI::IsMember({"skin", "skeleton", "both"}));

  auto* report = app.add_subcommand("report", "DOF table of a model or summary of a report");
  report->add_option("--model", model);
  report->add_option("--input", input);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  seed_set = seed_opt->count() > 0;

  try {
    CommandContext ctx;
    if (!config_path.empty()) ctx.config = load_config(config_path);
    if (seed_set) ctx.config.dataset.seed = seed;
    if (subjects > 0) ctx.config.dataset.subjects = subjects;
    if (frames > 0) ctx.config.dataset.frames = frames;
    if (noise >= 0) ctx.config.dataset.marker_noise = noise;
    if (mesh_frames >= 0) ctx.config.mesh_frames = mesh_frames;
    ctx.out = out;
    if (threads > 0) set_thread_count(threads);

    if (*gen) return command_gen(ctx);
    if (*fit_markers) return command_fit_markers(ctx, dataset);
    if (*train) return command_train_regressor(ctx, dataset, fits);
    if (*learn) return command_learn_orientation(ctx, dataset, fits);
    if (*build) return command_build(ctx, dataset, fits, regressor, orientation);
    if (*fit_mesh) return command_fit_mesh(ctx, MeshFitInputs{model, dataset, subject, targets, beta});
    if (*exp) return command_export(ctx, model, motion, what);
    if (*report) return command_report(ctx, model, input);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
