#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mtgan {

// Process-wide worker cap set by the CLI `--threads` flag. Results never
// depend on it: every parallel item owns its inputs, outputs and RNG stream.
inline std::size_t& worker_count() {
  static std::size_t n = 1;
  return n;
}

// Runs fn(i) for i in [0, n) on up to worker_count() threads with a static
// partition. The first exception thrown by any item is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(worker_count(), 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace mtgan
