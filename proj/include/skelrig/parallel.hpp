#pragma once

#include <functional>

namespace skelrig {

/// Worker count used by parallel_for (default: hardware concurrency).
void set_thread_count(int threads);
int thread_count();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; results
/// must be written to per-index slots so the outcome is order independent.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace skelrig
