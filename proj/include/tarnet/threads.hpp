#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace tarnet {

inline int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Splits [0, n) into at most `jobs` contiguous chunks and runs
/// fn(chunk_index, begin, end) on each from its own thread. Chunk boundaries
/// depend only on (n, jobs), so per-chunk results can be merged in chunk
/// order for a schedule-independent total.
inline void parallel_chunks(int64_t n, int jobs,
                            const std::function<void(int, int64_t, int64_t)>& fn) {
  jobs = resolve_jobs(jobs);
  if (n <= 0) return;
  if (jobs > n) jobs = static_cast<int>(n);
  if (jobs == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(jobs));
  const int64_t base = n / jobs, extra = n % jobs;
  int64_t begin = 0;
  for (int c = 0; c < jobs; ++c) {
    const int64_t len = base + (c < extra ? 1 : 0);
    const int64_t end = begin + len;
    threads.emplace_back([&fn, c, begin, end]() { fn(c, begin, end); });
    begin = end;
  }
  for (auto& t : threads) t.join();
}

}  // namespace tarnet
