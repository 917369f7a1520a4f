#include "skelrig/skeleton.hpp"

namespace skelrig {

int MarkerSet::count(MarkerClass cls) const {
  int n = 0;
  for (const auto& m : markers) n += m.cls == cls;
  return n;
}

Vec3 MarkerSet::offset(int k, const Eigen::VectorXd& beta) const {
  const Marker& m = markers[k];
  if (m.personalization.cols() == 0 || beta.size() == 0) return m.offset;
  if (m.personalization.cols() != beta.size()) fail(ErrorCode::DimensionMismatch, "beta size does not match markers");
  return m.offset + m.personalization * beta;
}

std::vector<double> MarkerSet::weights() const {
  std::vector<double> w;
  w.reserve(markers.size());
  for (const auto& m : markers) w.push_back(m.weight);
  return w;
}

Vec3 SkeletonTemplate::offset(int k) const {
  const int p = tree.joint(k).parent;
  if (p < 0) return tree.joint(k).rest_joint;
  return rest_rotation[p].transpose() * (tree.joint(k).rest_joint - tree.joint(p).rest_joint);
}

Placement SkeletonTemplate::placement(const BoneScales& scales) const {
  if (scales.rows() != tree.size()) fail(ErrorCode::DimensionMismatch, "one scale row per bone expected");
  return frames<double>(scales);
}

}  // namespace skelrig
