#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mlmosaic {

/// Process-wide cap on worker threads (>= 1). Defaults to 1.
void set_max_threads(int n);
int max_threads();

/// Splits [0, count) into fixed chunks of `grain` items and evaluates
/// fn(begin, end) -> T for each chunk, possibly on several threads. Results
/// come back in chunk order, so reducing them left to right gives the same
/// value whatever the thread count.
template <class T, class Fn>
std::vector<T> map_chunks(int count, int grain, Fn&& fn) {
  grain = std::max(grain, 1);
  const int chunks = count <= 0 ? 0 : (count + grain - 1) / grain;
  std::vector<T> results(static_cast<std::size_t>(chunks));
  const int workers = std::min(max_threads(), chunks);
  if (workers <= 1) {
    for (int c = 0; c < chunks; ++c) {
      results[c] = fn(c * grain, std::min(count, (c + 1) * grain));
    }
    return results;
  }

  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int c = next++; c < chunks; c = next++) {
      try {
        results[c] = fn(c * grain, std::min(count, (c + 1) * grain));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace mlmosaic
