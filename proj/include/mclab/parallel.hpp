#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace mclab {

/// Runs body(begin, end) over contiguous chunks of [0, count) on up to `threads` workers
/// (0 = hardware concurrency). Chunks are disjoint, so bodies writing only to their own
/// indices need no synchronization and results do not depend on the thread count.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  // small sweeps are not worth a thread
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count / 2048, 1)));
  if (threads <= 1) {
    body(std::size_t{0}, count);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned part = 0; part < threads; ++part)
    pool.emplace_back([&, part] { body(count * part / threads, count * (part + 1) / threads); });
}

}  // namespace mclab
