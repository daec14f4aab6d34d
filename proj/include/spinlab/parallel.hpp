// parallel.hpp
// Fixed-chunk parallel loops with index-ordered reduction.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "spinlab/common.hpp"

namespace spinlab {

namespace detail {
inline std::atomic<int>& thread_count_storage() {
  static std::atomic<int> value{1};
  return value;
}
}  // namespace detail

inline int thread_count() { return detail::thread_count_storage().load(); }

/// n <= 0 selects std::thread::hardware_concurrency().
inline void set_thread_count(int n) {
  if (n <= 0) n = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  detail::thread_count_storage().store(std::min(n, 256));
}

/// Reads SPINLAB_THREADS; returns 0 when unset or unparsable.
inline int threads_from_env() {
  const char* s = std::getenv("SPINLAB_THREADS");
  if (s == nullptr || *s == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || v < 1) return 0;
  return static_cast<int>(std::min(v, 256L));
}

/// Calls fn(i) for every i in [0, n), spread over thread_count() workers.
/// fn must only write to storage owned by index i. The first exception
/// thrown by any call is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Splits [0, n) into chunks of `chunk` indices, evaluates
/// partial = chunk_fn(begin, end) for each chunk in parallel, then folds the
/// partials in chunk order with combine(acc, partial). Because chunk
/// boundaries depend only on n and `chunk`, the result is bitwise identical
/// for any worker count.
template <typename T, typename ChunkFn, typename Combine>
T chunked_reduce(std::size_t n, std::size_t chunk, T init, ChunkFn&& chunk_fn, Combine&& combine) {
  if (chunk == 0) throw ValidationError("chunked_reduce: chunk size must be positive");
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<T> partial(chunks, init);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    partial[c] = chunk_fn(begin, end);
  });
  T acc = std::move(init);
  for (auto& p : partial) combine(acc, p);
  return acc;
}

}  // namespace spinlab
