#pragma once

#include <cstddef>
#include <functional>

namespace spadsim {

/// Worker threads for sweeps: hardware concurrency, capped by SPADSIM_THREADS
/// when that is set to a positive integer. Never less than 1.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) across worker_count() threads. Each index runs
/// exactly once; results must be written to per-index slots by the caller.
/// The first exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace spadsim
