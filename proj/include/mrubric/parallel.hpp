#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mrubric {

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `workers`
/// threads. Small ranges run inline since thread start-up would dominate.
/// The first exception thrown by any chunk is rethrown.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  constexpr std::size_t kMinChunk = 64;
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n < kMinChunk * threads) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(n, t * chunk);
      const std::size_t end = std::min(n, begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        try {
          body(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Runs task(j) for j in [0, n) on up to `workers` threads, handing out
/// indices one at a time. The first exception is rethrown.
template <typename Task>
void parallel_tasks(std::size_t n, int workers, Task&& task) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (threads <= 1) {
    for (std::size_t j = 0; j < n; ++j) task(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j = next++; j < n; j = next++) task(j);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mrubric
