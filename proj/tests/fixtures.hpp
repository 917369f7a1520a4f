// Shared, lazily built test objects.
#pragma once

#include "skelrig/dataset.hpp"
#include "skelrig/orientation.hpp"
#include "skelrig/skelmodel.hpp"

namespace fixture {

inline const skelrig::EnvelopeModel& envelope() {
  static const skelrig::EnvelopeModel m = skelrig::build_envelope({});
  return m;
}

/// Two subjects, 40 frames each, noise free.
inline const skelrig::PairedDataset& small_dataset() {
  static const skelrig::PairedDataset d = [] {
    skelrig::DatasetConfig c;
    c.subjects = 2;
    c.frames = 40;
    c.seed = 11;
    return skelrig::generate_dataset(envelope(), c);
  }();
  return d;
}

/// Model trained on the ground truth of small_dataset().
inline const skelrig::SkelModel& model() {
  static const skelrig::SkelModel m = [] {
    const auto& d = small_dataset();
    std::vector<skelrig::RegressorFrame> frames;
    for (size_t s = 0; s < d.subjects.size(); ++s) {
      for (int f = 0; f < d.subjects[s].frames(); ++f) {
        frames.push_back({&d.subjects[s].vertices[f], &d.subjects[s].joints[f], static_cast<int>(s)});
      }
    }
    const auto reg = skelrig::train_joint_regressor(frames);
    std::vector<skelrig::Rotation> base;
    for (int b = 0; b < envelope().skeleton.bones(); ++b) {
      std::vector<skelrig::RotationPair> pairs;
      for (const auto& sd : d.subjects) {
        for (int f = 0; f < sd.frames(); ++f) pairs.emplace_back(sd.envelope_rotations[f][b], sd.bone_rotations[f][b]);
      }
      base.push_back(skelrig::learn_base_rotation(pairs));
    }
    return skelrig::assemble_skel_model(envelope(), envelope().skeleton, reg, base);
  }();
  return m;
}

}  // namespace fixture
