#pragma once

#include <cstddef>
#include <functional>

namespace df {

// Worker count used by parallel_for. Resolution order: explicit
// set_thread_count, DEMAND_FORGE_THREADS, hardware concurrency.
int thread_count();
void set_thread_count(int n);  // n <= 0 restores automatic resolution

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker; each index writes only its own outputs, so results do not depend
// on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace df
