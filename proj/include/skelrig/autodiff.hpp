#pragma once

// Forward-mode jets for exact local derivatives. Only included by translation
// units that differentiate rig code; public headers stay jet-free.

#include <ceres/jet.h>

#include "skelrig/rigmath.hpp"

namespace skelrig {

template <typename T, int N>
struct ScalarOps<ceres::Jet<T, N>> {
  static double value(const ceres::Jet<T, N>& x) { return x.a; }
};

}  // namespace skelrig
