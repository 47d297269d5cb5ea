#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace expertdg::harness {

/// Calls fn(k) for k in [0, n) on up to `threads` workers. fn must write only
/// to slot k of its output; the first exception is rethrown after joining.
template <typename Fn>
void parallel_for(long long n, unsigned threads, Fn&& fn) {
  std::atomic<long long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (long long k = next++; k < n; k = next++) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const long long cap = std::max<long long>(1, std::min<long long>(threads, n));
  std::vector<std::thread> pool;
  for (long long t = 1; t < cap; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace expertdg::harness
