#pragma once

#include <cstddef>
#include <functional>

namespace unmix {

// Number of worker threads: UNMIX_THREADS when set (>0), otherwise the
// hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, count) across workers. Iterations must be
// independent; results written by index stay deterministic regardless of the
// thread count. Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace unmix
