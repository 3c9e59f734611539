#pragma once

#include <functional>

namespace cavlab {

/// Worker cap for independent jobs: min(CAVLAB_THREADS, hardware concurrency),
/// defaulting to the hardware count when the variable is unset.
int worker_count();

/// Run fn(0..n-1) on up to worker_count() threads. Jobs must be independent;
/// results keyed by index stay deterministic.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace cavlab
