#pragma once

// Fixed-partition parallel loops. Work is cut into blocks whose boundaries do
// not depend on the thread count, and callers reduce per-block results in
// block order, so results are bit-identical for any number of threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hmm2 {

inline std::size_t resolve_threads(std::size_t requested) {
  if (requested) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(block, begin, end) for each block of `block_size` items.
/// The first exception thrown by any block is rethrown after all workers stop.
template <typename Fn>
void parallel_blocks(std::size_t n_items, std::size_t block_size, std::size_t threads, Fn&& fn) {
  if (n_items == 0) return;
  block_size = std::max<std::size_t>(1, block_size);
  const std::size_t n_blocks = (n_items + block_size - 1) / block_size;
  threads = std::min(resolve_threads(threads), n_blocks);
  auto run = [&](std::size_t b) { fn(b, b * block_size, std::min(n_items, (b + 1) * block_size)); };
  if (threads <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n_blocks; b = next++) {
        try {
          run(b);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n_blocks;
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace hmm2
