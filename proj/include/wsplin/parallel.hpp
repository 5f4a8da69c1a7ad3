#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace wsplin {

// Worker count for data-parallel sections. WSPLIN_THREADS overrides the
// hardware count; 1 disables threading entirely.
inline int worker_count() {
  if (const char* env = std::getenv("WSPLIN_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs f(i) for i in [0, n). Each index must be independent; callers that
// need ordered results write into per-index slots and reduce sequentially
// afterwards, which keeps every reduction bitwise reproducible.
template <class F>
void parallel_for(int64_t n, F&& f, int max_workers = -1) {
  int workers = max_workers > 0 ? max_workers : worker_count();
  if (workers > n) workers = static_cast<int>(n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        int64_t i = next.fetch_add(1);
        if (i >= n) return;
        f(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace wsplin
