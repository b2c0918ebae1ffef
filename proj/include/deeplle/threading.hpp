#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace deeplle {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

// Worker count for data-parallel kernels. Defaults to 1; results are
// identical at any setting (workers own disjoint output slices).
inline int num_threads() { return detail::thread_count_slot().load(std::memory_order_relaxed); }

inline void set_num_threads(int n) {
  detail::thread_count_slot().store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

// fn(i) for i in [0, n), chunked over workers.
template <typename Fn>
void parallel_for(int64_t n, Fn fn) {
  const int workers = static_cast<int>(std::min<int64_t>(num_threads(), n));
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int64_t lo = n * w / workers;
    const int64_t hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace deeplle
