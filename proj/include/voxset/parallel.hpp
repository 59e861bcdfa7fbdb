// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <thread>
#include <vector>

#include "voxset/common.hpp"

namespace voxset {

// Runs fn(worker, begin, end) over a contiguous partition of [0, count).
// The partition depends only on (count, workers), so any reduction that
// combines per-worker results in worker order is reproducible for a fixed
// worker count. workers <= 1 runs inline.
template <typename Fn>
void parallel_chunks(int count, int workers, Fn&& fn) {
  require(count >= 0, "parallel_chunks: negative count");
  if (workers <= 1 || count <= 1) {
    if (count > 0) fn(0, 0, count);
    return;
  }
  if (workers > count) workers = count;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long>(count) * w / workers);
    const int end =
        static_cast<int>(static_cast<long>(count) * (w + 1) / workers);
    pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace voxset
