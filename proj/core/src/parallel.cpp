#include "rnan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace rnan {

namespace {

int default_threads() {
  if (const char* v = std::getenv("RNAN_DETERMINISTIC"); v && v[0] == '1')
    return 1;
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* v = std::getenv("RNAN_THREADS")) {
    int cap = std::atoi(v);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

std::atomic<int> g_threads{0};  // 0 = not yet resolved

}  // namespace

int num_threads() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n == 0) {
    n = default_threads();
    g_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_num_threads(int n) {
  g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

void parallel_for(int64_t n, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = num_threads();
  if (workers <= 1 || n < 2 * grain) {
    fn(0, n);
    return;
  }
  int chunks = static_cast<int>(std::min<int64_t>(workers, (n + grain - 1) / grain));
  int64_t per = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(chunks) - 1);
  for (int c = 1; c < chunks; ++c) {
    int64_t lo = c * per;
    int64_t hi = std::min<int64_t>(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min<int64_t>(per, n));
  for (auto& t : pool) t.join();
}

}  // namespace rnan
