#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace focus {

inline constexpr const char* kThreadsEnvVar = "FOCUS_THREADS";

// Thread count from FOCUS_THREADS, defaulting to 1.
inline std::size_t configured_threads() {
  const char* env = std::getenv(kThreadsEnvVar);
  if (env == nullptr || *env == '\0') return 1;
  try {
    const long n = std::stol(env);
    if (n <= 0) return std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    return 1;
  }
}

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is handled
// by exactly one call, so per-index results never depend on the thread count.
template <typename Fn>
void parallel_for_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
  if (n == 0) return;
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, t, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace focus
