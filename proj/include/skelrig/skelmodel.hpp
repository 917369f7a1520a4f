#pragma once

#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "skelrig/envelope.hpp"
#include "skelrig/orientation.hpp"
#include "skelrig/regressor.hpp"

namespace skelrig {

enum class AngleLimitPolicy { Clamp, Error };

/// Optional pose-dependent skin offsets, linear per DOF: B_P(q) = sum_j q_j D_j.
struct PoseCorrectives {
  std::vector<std::pair<int, Points>> per_dof;
  bool empty() const { return per_dof.empty(); }
};

struct SkelModel {
  KinematicTree tree;
  Mesh skin;                       // template T
  Eigen::MatrixXd shape_basis;     // 3N x K
  SparseRows skin_weights;         // N x bones
  JointRegressor regressor;
  std::vector<Rotation> base_rotation;
  std::vector<BoneSegment> segments;
  std::vector<Mesh> bone_meshes;   // bone frame, parent joint at origin
  SparseRows skeleton_weights;     // stacked bone vertices x bones
  MarkerSet markers;
  std::vector<int> envelope_part_to_joint;
  PoseCorrectives correctives;
  AngleLimitPolicy limit_policy = AngleLimitPolicy::Clamp;

  int bones() const { return tree.size(); }
  int shape_dims() const { return static_cast<int>(shape_basis.cols()); }
  int skeleton_vertex_count() const;
  Faces skeleton_faces() const;
};

/// Everything that depends on beta only.
struct SkelShape {
  Eigen::VectorXd beta;
  Points shaped;                     // T + beta S
  TPosePlacement placement;
  std::vector<double> bone_scale;    // longitudinal
  Points skeleton_rest;              // stacked, world T-pose
  // per nonzero of skeleton_weights: coordinates in that bone's T-pose frame
  std::vector<Vec3> skeleton_local;
};

struct SkelOutput {
  Mesh skin;
  Mesh skeleton;
  Points joints;
  std::vector<std::string> warnings;
};

/// Longitudinal scale = target segment length / rest segment length.
std::vector<double> bone_scale_factors(const TPosePlacement& placement);

SkelShape prepare_shape(const SkelModel& model, const Eigen::VectorXd& beta);

/// Applies the angle-limit policy; returns warnings for clamped DOFs.
std::vector<std::string> apply_limits(const SkelModel& model, Pose& pose);

SkelOutput skel_forward(const SkelModel& model, const SkelShape& shape, const Pose& pose);
SkelOutput skel_forward(const SkelModel& model, const Eigen::VectorXd& beta, const Pose& pose);

/// Posed skin vertices only (used by fitting).
Points skel_skin_vertices(const SkelModel& model, const SkelShape& shape, const Pose& pose,
                          const FkResult<double>& fk);

struct DofRow {
  int index;
  std::string name;
  std::string joint;
  JointKind kind;
  double lo, hi;
};
std::vector<DofRow> joint_ranges_report(const SkelModel& model);

/// Assembles a SKEL model from the envelope surface, the anatomical tree and
/// the learned regressor / base rotations.
SkelModel assemble_skel_model(const EnvelopeModel& envelope, const SkeletonTemplate& skeleton,
                              const JointRegressor& regressor, const std::vector<Rotation>& base);

/// Caches the shape-dependent state for the most recent beta.
class SkelEvaluator {
 public:
  explicit SkelEvaluator(std::shared_ptr<const SkelModel> model) : model_(std::move(model)) {}
  std::shared_ptr<const SkelShape> shape(const Eigen::VectorXd& beta) const;
  SkelOutput forward(const Eigen::VectorXd& beta, const Pose& pose) const;
  const SkelModel& model() const { return *model_; }

 private:
  std::shared_ptr<const SkelModel> model_;
  mutable std::shared_mutex mutex_;
  mutable std::shared_ptr<const SkelShape> cached_;
};

}  // namespace skelrig
