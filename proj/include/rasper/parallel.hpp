#pragma once

#include <cstddef>
#include <functional>

namespace rasper {

/// Number of hardware threads, at least 1.
int default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Indices are
/// handed out one at a time; callers write results into per-index slots so the
/// outcome does not depend on the thread count. The first exception thrown
/// by any body is rethrown after all workers join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

} // namespace rasper
