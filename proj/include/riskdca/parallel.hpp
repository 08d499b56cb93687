#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace riskdca {

// Runs fn(i) for i in [0,n) across up to `threads` workers in contiguous
// chunks. Each index owns its output slot, so results are deterministic
// regardless of scheduling. fn must not throw.
inline void parallel_for(int n, int threads,
                         const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int begin = t * chunk;
    int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace riskdca
