#ifndef TWOPASS_PARALLEL_HPP
#define TWOPASS_PARALLEL_HPP

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace twopass {

// Runs fn(i) for i in [0, n) across up to `threads` workers with a static
// block partition. Results must be written to per-index slots by the caller;
// any later reduction over those slots must walk them in index order so the
// outcome is identical at every thread count. threads <= 1 runs inline.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  if (n <= 0) return;
  const int workers =
      std::max(1, std::min<std::int64_t>(threads, n) > 0
                      ? static_cast<int>(std::min<std::int64_t>(threads, n))
                      : 1);
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end]() {
      try {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace twopass

#endif  // TWOPASS_PARALLEL_HPP
