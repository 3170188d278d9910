#pragma once

#include <cstddef>
#include <functional>

namespace jules {

/// Number of workers for a `threads` request; <= 0 means all available cores.
int resolve_threads(int threads);

/// Calls fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any call is rethrown after all workers have stopped.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace jules
