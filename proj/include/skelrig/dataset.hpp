#pragma once

#include <cstdint>
#include <vector>

#include "skelrig/envelope.hpp"

namespace skelrig {

struct DatasetConfig {
  int subjects = 3;
  int frames = 200;
  std::uint64_t seed = 1;
  double marker_noise = 0.0;  // metres, per coordinate
  double beta_sigma = 1.0;
  double frame_rate = 30.0;
  double amplitude = 1.0;     // motion amplitude multiplier
};

struct SubjectData {
  Eigen::VectorXd beta;
  BoneScales scales;          // ground-truth skeleton scales
  double height = 0;
  std::vector<Pose> poses;
  std::vector<Points> vertices;   // envelope surface per frame
  std::vector<Points> markers;    // observed markers per frame
  std::vector<Points> joints;     // skeleton joint locations per frame
  std::vector<std::vector<Mat3>> bone_rotations;      // R^B per frame, per bone
  std::vector<std::vector<Mat3>> envelope_rotations;  // R^S per frame, per bone
  int frames() const { return static_cast<int>(poses.size()); }
};

struct PairedDataset {
  DatasetConfig config;
  std::vector<SubjectData> subjects;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Smooth joint trajectories inside the joint limits.
std::vector<Pose> sample_trajectory(const KinematicTree& tree, int frames, double frame_rate, double amplitude,
                                    std::uint64_t seed);

/// Poses the envelope so its parts follow the scaled skeleton for each pose.
SubjectData simulate_subject(const EnvelopeModel& model, const Eigen::VectorXd& beta, const std::vector<Pose>& poses,
                             double marker_noise, std::uint64_t noise_seed);

PairedDataset generate_dataset(const EnvelopeModel& model, const DatasetConfig& config);

}  // namespace skelrig
