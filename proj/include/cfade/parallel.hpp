#pragma once

#include <cstddef>
#include <functional>

namespace cfade {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency; CFADE_THREADS overrides it.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) across worker threads. Each index runs
/// exactly once; callers write results into slot i so output order never
/// depends on scheduling. The first exception thrown by any body is
/// rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cfade
