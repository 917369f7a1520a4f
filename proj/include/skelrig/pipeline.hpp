#pragma once

#include <string>
#include <vector>

#include "skelrig/config.hpp"
#include "skelrig/io.hpp"
#include "skelrig/meshfit.hpp"

namespace skelrig {

/// Scale prior from the height of the shaped template (mean = height ratio).
ScalePrior subject_prior(const EnvelopeModel& envelope, const Eigen::VectorXd& beta, const PipelineConfig& config);

/// Bi-level marker fit of one subject.
SubjectFit fit_subject(const EnvelopeModel& envelope, const SubjectData& subject, const PipelineConfig& config);

/// Replaces the subject's joints and bone rotations by those of the fitted skeleton.
void apply_fit(const EnvelopeModel& envelope, const SubjectFit& fit, SubjectData& subject);

struct RegressorSplit {
  std::vector<RegressorFrame> train;
  std::vector<RegressorFrame> test;
};
/// Every `holdout_every`-th frame of each subject goes to the test split.
RegressorSplit regressor_split(const PairedDataset& data, int holdout_every);

JointRegressor train_regressor_stage(const PairedDataset& data, const PipelineConfig& config,
                                     RegressorReport* report = nullptr);
/// One base rotation per bone from (envelope part, bone) rotation pairs of every frame.
std::vector<Rotation> learn_orientation_stage(const PairedDataset& data);

struct JointError {
  double rms = 0;   // metres
  double max = 0;
  double mean = 0;
};
JointError joint_error(const JointRegressor& regressor, const std::vector<RegressorFrame>& frames);

// ---------------------------------------------------------------------------
// command implementations shared by the CLI; return the process exit code

struct CommandContext {
  PipelineConfig config;
  std::string out;
};

int command_gen(const CommandContext& ctx);
int command_fit_markers(const CommandContext& ctx, const std::string& dataset);
int command_train_regressor(const CommandContext& ctx, const std::string& dataset, const std::string& fits);
int command_learn_orientation(const CommandContext& ctx, const std::string& dataset, const std::string& fits);
int command_build(const CommandContext& ctx, const std::string& dataset, const std::string& fits,
                  const std::string& regressor, const std::string& orientation);

struct MeshFitInputs {
  std::string model;
  std::string dataset;   // fit the envelope surfaces of one dataset subject
  int subject = 0;
  std::string targets;   // or: packed frames file / directory of OBJ files
  std::string beta;      // comma separated, used with `targets`
};
int command_fit_mesh(const CommandContext& ctx, const MeshFitInputs& in);
int command_export(const CommandContext& ctx, const std::string& model, const std::string& motion,
                   const std::string& what);
int command_report(const CommandContext& ctx, const std::string& model, const std::string& input);

/// Loads fits written by fit-markers for every subject of a dataset.
std::vector<SubjectFit> load_fits(const std::string& fits_dir, int subjects);

}  // namespace skelrig
