#pragma once

#include <cstddef>
#include <functional>

namespace optstop {

/// Worker count used by parallel_for. Defaults to $OPTSTOP_THREADS, else the
/// hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Splits [0, n) into contiguous chunks and runs `body(begin, end)` on each.
/// Chunk boundaries depend only on n and the thread count; callers that write
/// per-index results and reduce afterwards get thread-count-independent output.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace optstop
