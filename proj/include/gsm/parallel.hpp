#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace gsm {

// Worker count: GSM_THREADS when set (>= 1), else hardware concurrency.
inline std::size_t thread_count() {
  if (const char* env = std::getenv("GSM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace parallel_detail {
inline thread_local bool in_worker = false;
}  // namespace parallel_detail

// Runs fn(i) for i in [0, n) over contiguous blocks. fn must only write state
// owned by index i, so the result does not depend on the thread count.
// Calls made from inside a worker run serially.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_block = 64) {
  const std::size_t workers = std::min(thread_count(), (n + min_block - 1) / std::max<std::size_t>(min_block, 1));
  if (workers <= 1 || parallel_detail::in_worker) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn, &failure, &failure_mutex] {
      parallel_detail::in_worker = true;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gsm
