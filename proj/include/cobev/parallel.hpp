#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace cobev {

/// Process-wide worker count for the data-parallel loops below. Parallel
/// sections only ever write disjoint output ranges, so results are
/// bit-identical for any count.
inline unsigned& thread_count() {
  static unsigned n = 1;
  return n;
}

inline void set_thread_count(unsigned n) { thread_count() = n == 0 ? 1 : n; }

/// Runs fn(begin, end) over contiguous index chunks.
inline void parallel_chunks(std::size_t begin, std::size_t end,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t n = end > begin ? end - begin : 0;
  const unsigned workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    if (n > 0) fn(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t step = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t b = begin + w * step;
    const std::size_t e = std::min(end, b + step);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  for (auto& t : pool) t.join();
}

}  // namespace cobev
