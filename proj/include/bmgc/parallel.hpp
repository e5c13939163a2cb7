#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace bmgc {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end, chunk_index) over contiguous chunks. Chunk boundaries
// depend only on (n, threads), so any reduction that combines chunk results
// in chunk order is deterministic for a fixed thread count.
template <class Fn>
void parallel_chunks(size_t n, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  const size_t chunk = (n + threads - 1) / static_cast<size_t>(threads);
  if (threads == 1 || n <= 1 || chunk == 0) {
    if (n > 0) fn(size_t{0}, n, size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  size_t idx = 0;
  for (size_t begin = 0; begin < n; begin += chunk, ++idx) {
    const size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, begin, end, idx] { fn(begin, end, idx); });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace bmgc
