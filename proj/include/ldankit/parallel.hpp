#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace ldankit {

// Splits [0, n) into contiguous chunks, one worker per chunk. Each index is
// processed by exactly one worker with no cross-worker reductions, so results
// are bitwise identical for every thread count.
template <class Fn>
void parallel_for(int64_t n, int threads, Fn&& body) {
  if (n <= 0) return;
  threads = static_cast<int>(std::max<int64_t>(1, std::min<int64_t>(threads, n)));
  if (threads == 1) {
    body(int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int64_t b = t * chunk;
    const int64_t e = std::min<int64_t>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  for (auto& th : pool) th.join();
}

inline int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace ldankit
