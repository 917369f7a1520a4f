#include "skelrig/dataset.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace skelrig {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct DofMotion {
  double center = 0, amp = 0;
};

DofMotion motion_for(const JointSpec& j, int d) {
  const std::string& n = j.dof_names[d];
  auto has = [&](const char* s) { return n.find(s) != std::string::npos; };
  if (j.kind == JointKind::Free6) return {0.0, d == 2 ? 0.6 : 0.2};
  if (has("knee")) return {0.6, 0.5};
  if (has("elbow")) return {0.7, 0.5};
  if (has("hip")) return {0.0, has("flexion") ? 0.4 : 0.15};
  if (has("ankle") || has("mtp")) return {0.0, 0.22};
  if (has("subtalar")) return {0.0, 0.15};
  if (j.kind == JointKind::SpineCC3) return {0.0, 0.12};
  if (j.kind == JointKind::Scapula3) return {0.0, 0.08};
  if (has("arm_")) return {0.0, 0.4};
  if (has("pro_sup")) return {0.0, 0.5};
  return {0.0, 0.3};
}

}  // namespace

std::vector<Pose> sample_trajectory(const KinematicTree& tree, int frames, double frame_rate, double amplitude,
                                    std::uint64_t seed) {
  if (frames < 1) fail(ErrorCode::ConfigError, "frames must be positive");
  if (!(frame_rate > 0)) fail(ErrorCode::ConfigError, "frame rate must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> f1(0.15, 0.6), f2(0.6, 1.5), phase(0.0, 2.0 * kPi);
  const int n = tree.dof_count();
  struct Wave {
    double c, a, f1, p1, f2, p2;
  };
  std::vector<Wave> waves;
  for (const auto& j : tree.joints()) {
    for (int d = 0; d < j.dofs(); ++d) {
      const DofMotion m = motion_for(j, d);
      waves.push_back({m.center, m.amp * amplitude, f1(rng), phase(rng), f2(rng), phase(rng)});
    }
  }
  std::array<Wave, 3> tw;
  for (int c = 0; c < 3; ++c) tw[c] = {0.0, c == 1 ? 0.02 : 0.15, f1(rng), phase(rng), f2(rng), phase(rng)};
  const auto limits = tree.dof_limits();
  std::vector<Pose> out;
  for (int f = 0; f < frames; ++f) {
    const double t = f / frame_rate;
    auto eval = [t](const Wave& w) {
      return w.c + w.a * (0.7 * std::sin(2 * kPi * w.f1 * t + w.p1) + 0.3 * std::sin(2 * kPi * w.f2 * t + w.p2));
    };
    Pose p = Pose::zero(n);
    for (int d = 0; d < n; ++d) p.q[d] = std::clamp(eval(waves[d]), limits[d].lo, limits[d].hi);
    for (int c = 0; c < 3; ++c) p.trans[c] = eval(tw[c]);
    out.push_back(p);
  }
  return out;
}

SubjectData simulate_subject(const EnvelopeModel& model, const Eigen::VectorXd& beta, const std::vector<Pose>& poses,
                             double marker_noise, std::uint64_t noise_seed) {
  SubjectData s;
  s.beta = beta;
  s.scales = true_scales(model, beta);
  const Points shaped = envelope_shape(model, beta);
  const Points env_joints = envelope_joints(model, shaped);
  s.height = mesh_height(shaped);
  const KinematicTree& tree = model.skeleton.tree;
  const Placement pl = model.skeleton.placement(s.scales);
  std::vector<int> bone_to_part(tree.size());
  for (int p = 0; p < model.parts(); ++p) bone_to_part[model.part_to_bone[p]] = p;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const Pose& pose : poses) {
    const FkResult<double> fk = forward_kinematics(tree, pose, pl);
    std::vector<RigidTransform> parts(model.parts());
    for (int p = 0; p < model.parts(); ++p) parts[p] = fk.skin[model.part_to_bone[p]];
    const Eigen::VectorXd theta = envelope_theta_from_transforms(model, env_joints, parts);
    EnvelopePosed posed = envelope_pose_shaped(model, shaped, env_joints, theta);
    Points mk(model.markers.size(), 3);
    for (int k = 0; k < model.markers.size(); ++k) {
      mk.row(k) = posed.vertices.row(model.markers.markers[k].vertex);
      if (marker_noise > 0) {
        for (int c = 0; c < 3; ++c) mk(k, c) += marker_noise * noise(rng);
      }
    }
    Points jt(tree.size(), 3);
    std::vector<Mat3> rb(tree.size()), rs(tree.size());
    for (int i = 0; i < tree.size(); ++i) {
      jt.row(i) = fk.skel[i].t.transpose();
      rb[i] = fk.skel[i].R;
      rs[i] = posed.part_transforms[bone_to_part[i]].R;
    }
    s.poses.push_back(pose);
    s.vertices.push_back(std::move(posed.vertices));
    s.markers.push_back(std::move(mk));
    s.joints.push_back(std::move(jt));
    s.bone_rotations.push_back(std::move(rb));
    s.envelope_rotations.push_back(std::move(rs));
  }
  return s;
}

PairedDataset generate_dataset(const EnvelopeModel& model, const DatasetConfig& config) {
  if (config.subjects < 1) fail(ErrorCode::ConfigError, "need at least one subject");
  if (config.marker_noise < 0) fail(ErrorCode::ConfigError, "marker noise must be non-negative");
  PairedDataset ds;
  ds.config = config;
  for (int p = 0; p < config.subjects; ++p) {
    std::mt19937_64 rng(mix_seed(config.seed, 3 * p));
    std::normal_distribution<double> g(0.0, config.beta_sigma);
    Eigen::VectorXd beta(model.shape_dims());
    for (int k = 0; k < beta.size(); ++k) beta[k] = std::clamp(g(rng), -2.5, 2.5);
    const auto poses = sample_trajectory(model.skeleton.tree, config.frames, config.frame_rate, config.amplitude,
                                         mix_seed(config.seed, 3 * p + 1));
    ds.subjects.push_back(simulate_subject(model, beta, poses, config.marker_noise, mix_seed(config.seed, 3 * p + 2)));
  }
  return ds;
}

}  // namespace skelrig
