#ifndef ERAPS_PARALLEL_HPP_
#define ERAPS_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace eraps {

/// Worker cap: ERAPS_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// runs exactly once; the first exception thrown is rethrown to the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace eraps

#endif  // ERAPS_PARALLEL_HPP_
