#pragma once

#include <cstddef>
#include <functional>

namespace ca {

// Worker count. Resolved once from CONTOUR_ADAPT_THREADS; 0 (or 1) means
// single-threaded, unset means hardware concurrency.
int thread_count();

// Test hook; pass 0 to restore the environment-derived value.
void set_thread_count(int n);

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Callers must keep per-index work independent with disjoint writes, so the
// result is bitwise identical for every thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ca
