#pragma once

#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "skelrig/mesh.hpp"
#include "skelrig/skeleton.hpp"

namespace skelrig {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct EnvelopeConfig {
  double resolution = 1.0;  // ring / segment density multiplier
  int shape_dims = 8;       // 1..8
  int bony_markers = 57;
  int soft_markers = 48;
  double bony_weight = 1.0;
  double soft_weight = 0.25;
};

/// Surface body model posed by linear blend skinning, together with the
/// anatomical skeleton it was built around.
struct EnvelopeModel {
  Mesh mesh;                         // template T_env
  Eigen::MatrixXd shape_basis;       // 3N x K, each column a column-major N x 3 field
  SparseRows weights;                // N x parts
  std::vector<std::string> part_names;
  std::vector<int> part_parent;
  SparseRows joint_regressor;        // parts x N
  std::vector<int> part_to_bone;     // envelope part -> skeleton bone

  SkeletonTemplate skeleton;
  Eigen::MatrixXd scale_basis;       // (bones*3) x K, s = 1 + basis * beta (row = bone*3 + axis)
  MarkerSet markers;

  int parts() const { return static_cast<int>(part_names.size()); }
  int shape_dims() const { return static_cast<int>(shape_basis.cols()); }
  int pose_size() const { return 6 * parts(); }
};

/// Builds the synthetic humanoid. Throws ConfigError for bad dimensions.
EnvelopeModel build_envelope(const EnvelopeConfig& config);

Points envelope_shape(const EnvelopeModel& model, const Eigen::VectorXd& beta);
Points envelope_joints(const EnvelopeModel& model, const Points& shaped);

/// theta holds per part a rotation vector then a translation (6 numbers),
/// both relative to the parent part.
struct EnvelopePosed {
  Points vertices;
  std::vector<RigidTransform> part_transforms;
};
EnvelopePosed envelope_pose(const EnvelopeModel& model, const Eigen::VectorXd& beta, const Eigen::VectorXd& theta);
EnvelopePosed envelope_pose_shaped(const EnvelopeModel& model, const Points& shaped, const Points& joints,
                                   const Eigen::VectorXd& theta);

/// Envelope pose parameters reproducing given world part transforms.
Eigen::VectorXd envelope_theta_from_transforms(const EnvelopeModel& model, const Points& joints,
                                               const std::vector<RigidTransform>& part_transforms);

/// Skeleton scales implied by the length part of beta.
BoneScales true_scales(const EnvelopeModel& model, const Eigen::VectorXd& beta);

/// Skin height (extent along +y) of the shaped template.
double mesh_height(const Points& vertices);

// Default anatomy, usable without building a full envelope.
KinematicTree default_tree();

}  // namespace skelrig
