#pragma once

#include <cstddef>
#include <functional>

namespace persistlab {

// Worker count used by replicate-parallel loops; 0 means hardware concurrency.
void set_thread_count(unsigned threads);
unsigned thread_count();

// Runs body(i) for i in [0, n) on the configured worker pool. Work is split
// into contiguous chunks; body must only write to per-index storage.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace persistlab
