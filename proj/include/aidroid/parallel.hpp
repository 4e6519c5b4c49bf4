#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace aidroid {

// Static block partition of [0, n) over `threads` workers. fn(begin, end).
template <typename Fn>
void parallel_for_blocks(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = n * t / threads;
    const std::size_t end = n * (t + 1) / threads;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace aidroid
