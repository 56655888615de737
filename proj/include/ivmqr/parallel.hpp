#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ivmqr {

namespace detail {
inline std::atomic<int>& thread_limit()
{
  static std::atomic<int> limit{ 0 };
  return limit;
}
} // namespace detail

// Caps the worker count used by parallel_for. 0 means hardware concurrency.
inline void set_max_threads(int n)
{
  detail::thread_limit() = std::max(0, n);
}

inline int max_threads()
{
  int n = detail::thread_limit();
  if (n > 0)
    return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
// write results into per-index slots so the outcome does not depend on the
// schedule.
template<class Body>
void parallel_for(std::size_t n, Body&& body)
{
  const std::size_t workers =
    std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers)
          body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error)
          error = std::current_exception();
      }
    });
  }
  for (auto& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace ivmqr
