#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace dbs {

/// Thread count from DBS_THREADS, falling back to the hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv("DBS_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline int resolve_thread_count(int requested) {
  return requested > 0 ? requested : default_thread_count();
}

/// Runs fn(i) for i in [0, n). Worker w handles i = w, w + threads, ...
/// so the assignment of work to threads is fixed for a given thread count.
/// The first exception thrown by any worker is rethrown on the caller.
template <class Fn> void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(resolve_thread_count(threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Like parallel_for but also passes the worker index, for per-worker scratch.
template <class Fn>
void parallel_for_workers(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(resolve_thread_count(threads)), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, std::size_t{0});
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i, w);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Number of workers parallel_for_workers will use for n items.
inline std::size_t worker_count(std::size_t n, int threads) {
  return std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(resolve_thread_count(threads)), n));
}

}  // namespace dbs
