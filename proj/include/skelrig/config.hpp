#pragma once

#include <string>

#include "skelrig/bilevel.hpp"
#include "skelrig/dataset.hpp"
#include "skelrig/regressor.hpp"
#include "skelrig/skelmodel.hpp"

namespace skelrig {

struct PipelineConfig {
  EnvelopeConfig envelope;
  DatasetConfig dataset;
  BilevelOptions fit;
  double prior_sigma = 0.06;
  double density = 1000.0;      // kg / m^3
  RegressorOptions regressor;
  int holdout_every = 5;        // every n-th frame is held out of regressor training
  LmOptions mesh_fit;
  int mesh_frames = 0;          // frames fitted by fit-mesh (0: all)
  AngleLimitPolicy limit_policy = AngleLimitPolicy::Clamp;
};

/// Flat INI text with sections [envelope], [dataset], [fitting], [ik],
/// [regressor], [meshfit] and [model]. Unknown keys are a ConfigError.
void apply_config_text(PipelineConfig& config, const std::string& text);
PipelineConfig load_config(const std::string& path);
std::string format_config(const PipelineConfig& config);

}  // namespace skelrig
