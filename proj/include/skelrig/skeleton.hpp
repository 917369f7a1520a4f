#pragma once

#include <string>
#include <vector>

#include "skelrig/kinematics.hpp"
#include "skelrig/mesh.hpp"

namespace skelrig {

using BoneScales = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Per-bone, per-axis scales and per-marker offset corrections (bone frame).
struct ScaleSet {
  BoneScales s;
  std::vector<Vec3> delta;

  static ScaleSet ones(int bones, int markers) {
    return ScaleSet{BoneScales::Ones(bones, 3), std::vector<Vec3>(markers, Vec3::Zero())};
  }
};

/// How a bone's length is measured: to a child joint or to a landmark vertex.
struct BoneSegment {
  int end_joint = -1;
  int landmark_vertex = -1;
  Vec3 rest_local = Vec3::Zero();  // rest segment vector in the bone frame
};

enum class MarkerClass { Bony, Soft };

struct Marker {
  std::string name;
  MarkerClass cls = MarkerClass::Bony;
  int vertex = -1;                 // envelope vertex the marker sits on
  int bone = 0;
  Vec3 offset = Vec3::Zero();      // template offset in the bone frame
  Eigen::Matrix3Xd personalization;  // d offset / d beta, 3 x K
  double weight = 1.0;
};

struct MarkerSet {
  std::vector<Marker> markers;

  int size() const { return static_cast<int>(markers.size()); }
  int count(MarkerClass cls) const;
  /// Template offset personalised by the girth part of beta.
  Vec3 offset(int k, const Eigen::VectorXd& beta) const;
  std::vector<double> weights() const;
};

/// Scalable skeleton: a tree with rest frames; J_k(s) = J_p + R_p (s_p * d_k).
struct SkeletonTemplate {
  KinematicTree tree;
  std::vector<Mat3> rest_rotation;
  std::vector<BoneSegment> segments;
  std::vector<Mesh> bone_meshes;  // bone frame, joint at the origin

  int bones() const { return tree.size(); }
  /// Rest offset of joint k from its parent, in the parent frame.
  Vec3 offset(int k) const;

  template <typename T>
  JointFrames<T> frames(const Eigen::Matrix<T, Eigen::Dynamic, 3>& scales) const {
    const int n = tree.size();
    JointFrames<T> f;
    f.rotation.resize(n);
    f.joint.resize(n);
    for (int k = 0; k < n; ++k) {
      f.rotation[k] = rest_rotation[k].cast<T>();
      const int p = tree.joint(k).parent;
      if (p < 0) {
        f.joint[k] = tree.joint(k).rest_joint.cast<T>();
      } else {
        const Vec3 d = offset(k);
        Vec3T<T> sd;
        for (int a = 0; a < 3; ++a) sd[a] = scales(p, a) * T(d[a]);
        f.joint[k] = f.joint[p] + f.rotation[p] * sd;
      }
    }
    return f;
  }

  Placement placement(const BoneScales& scales) const;
};

}  // namespace skelrig
