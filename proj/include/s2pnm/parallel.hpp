#pragma once

#include <cstddef>
#include <functional>

namespace s2pnm {

/// Worker count: S2PREF_THREADS when set to a positive integer, else the
/// hardware concurrency.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) over contiguous chunks on up to thread_count()
/// threads. Callers write results to slot i, keeping output order fixed.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace s2pnm
