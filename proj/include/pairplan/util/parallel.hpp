#pragma once

#include <cstddef>
#include <functional>

namespace pairplan::util {

// Worker cap: min(PAIRPLAN_THREADS, hardware_concurrency), at least 1.
int worker_count();

// Runs fn(i) for i in [0, n). Tasks must be independent and write results by
// index; the schedule is work-stealing over an atomic counter, so outputs are
// identical for any worker count. The first thrown exception is rethrown on
// the calling thread after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pairplan::util
