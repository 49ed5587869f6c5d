#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ivsurv {

/// Process-wide worker count; 0 means std::thread::hardware_concurrency().
void set_thread_count(unsigned n);
unsigned thread_count();

namespace detail {
// Nested parallel_for calls run serially inside an already parallel region.
inline thread_local bool in_parallel_region = false;
}  // namespace detail

/// Runs body(i) for every i in [0, n). Each index is owned by exactly one
/// worker, so writing results into slot i keeps the output independent of
/// scheduling. The first exception thrown by any body is rethrown here.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers =
      detail::in_parallel_region ? 1 : std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    detail::in_parallel_region = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        break;
      }
    }
    detail::in_parallel_region = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ivsurv
