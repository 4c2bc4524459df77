#pragma once

#include <cstddef>
#include <functional>

namespace densityscan {

/// Worker cap: DENSITYSCAN_THREADS if set to a positive integer, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into per-index slots so the outcome never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace densityscan
