#pragma once

#include <cstddef>
#include <functional>

namespace branchmoments {

/// Worker count: BRANCHMOMENTS_THREADS if set and positive, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls body(i) for every i in [0, n) on up to worker_count() threads. Work is
/// handed out by an atomic counter; callers write results into slot i so the
/// output never depends on scheduling. The exception thrown for the lowest
/// index is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace branchmoments
