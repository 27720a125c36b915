#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace sortconv::runtime {

namespace detail {
inline bool& deterministic_flag() {
  static bool flag = false;
  return flag;
}
inline int& thread_override() {
  static int n = 0;  // 0 = unset
  return n;
}
}  // namespace detail

// Deterministic mode serializes everything (single worker) so repeated runs
// with the same seed are bitwise identical.
inline void set_deterministic(bool on) { detail::deterministic_flag() = on; }
inline bool deterministic() { return detail::deterministic_flag(); }

inline void set_threads(int n) { detail::thread_override() = n; }

// Worker count: deterministic mode forces 1; otherwise the explicit override,
// the SORTCONV_THREADS env var, or hardware concurrency, in that order.
inline int threads() {
  if (detail::deterministic_flag()) return 1;
  if (detail::thread_override() > 0) return detail::thread_override();
  if (const char* env = std::getenv("SORTCONV_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(begin, end, worker_index) over [0, total) split into contiguous
// chunks, one per worker. Exceptions from workers are rethrown on the caller.
inline void parallel_chunks(std::int64_t total,
                            const std::function<void(std::int64_t, std::int64_t, int)>& fn,
                            int max_workers = 0) {
  int workers = max_workers > 0 ? std::min(max_workers, threads()) : threads();
  workers = static_cast<int>(std::min<std::int64_t>(workers, total));
  if (total <= 0) return;
  if (workers <= 1) {
    fn(0, total, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  const std::int64_t chunk = (total + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t b = static_cast<std::int64_t>(w) * chunk;
    const std::int64_t e = std::min(total, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e, w] {
      try {
        fn(b, e, w);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace sortconv::runtime
