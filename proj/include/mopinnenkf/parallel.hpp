#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace mopinnenkf {

inline int default_thread_count() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
/// The partition depends only on n and chunk_size, never on the worker count,
/// so combining per-chunk results in chunk order is reproducible.
inline void parallel_chunks(int n, int chunk_size, int threads,
                            const std::function<void(int, int, int)>& fn) {
  if (n <= 0) return;
  if (chunk_size <= 0) chunk_size = n;
  const int n_chunks = (n + chunk_size - 1) / chunk_size;
  if (threads <= 1 || n_chunks == 1) {
    for (int c = 0; c < n_chunks; ++c) fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= n_chunks) return;
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    }
  };
  std::vector<std::thread> pool;
  const int extra = std::min(threads, n_chunks) - 1;
  pool.reserve(static_cast<std::size_t>(extra));
  for (int i = 0; i < extra; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

/// One task per index; for coarse-grained jobs (population members, grid rows).
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  parallel_chunks(n, 1, threads, [&](int, int b, int e) {
    for (int i = b; i < e; ++i) fn(i);
  });
}

}  // namespace mopinnenkf
