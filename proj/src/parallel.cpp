#include "contour_adapt/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ca {
namespace {

int env_thread_count() {
  const char* env = std::getenv("CONTOUR_ADAPT_THREADS");
  if (env != nullptr) {
    int v = std::atoi(env);
    if (v <= 0) return 1;
    return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int> g_override{0};

}  // namespace

int thread_count() {
  int o = g_override.load(std::memory_order_relaxed);
  if (o > 0) return o;
  static const int n = env_thread_count();
  return n;
}

void set_thread_count(int n) { g_override.store(n, std::memory_order_relaxed); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = static_cast<std::size_t>(thread_count());
  if (workers > n) workers = n;
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) {
    std::size_t begin = t * chunk;
    if (begin >= n) break;
    std::size_t end = std::min(n, begin + chunk);
    threads.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(n, chunk));
  for (auto& th : threads) th.join();
}

}  // namespace ca
