#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace msm {

// Splits [0, count) into contiguous chunks, one worker thread per chunk.
// Callers must make per-chunk work independent (e.g. index-derived RNG
// substreams) so results do not depend on the worker count.
inline void parallel_chunks(
    std::uint64_t count,
    const std::function<void(std::uint64_t begin, std::uint64_t end)>& body,
    unsigned max_workers = 0) {
  unsigned workers = max_workers ? max_workers : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (count < 2 * workers) {
    body(0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::uint64_t chunk = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::uint64_t begin = w * chunk;
    if (begin >= count) break;
    const std::uint64_t end = begin + chunk < count ? begin + chunk : count;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace msm
