#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dtdens {

inline std::size_t
default_workers()
{
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

//! Calls fn(i) for i in [0, count) on up to `workers` threads. Work is handed
//! out by index, so results written to slot i do not depend on scheduling.
//! The first exception thrown by any task is rethrown after all threads join.
template<class Fn>
void
parallel_for(std::size_t count, std::size_t workers, Fn&& fn)
{
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back(run);
  for (auto& t : pool)
    t.join();
  if (failure)
    std::rethrow_exception(failure);
}

//! SplitMix64 finalizer, used to derive independent per-task seeds from a
//! base seed and a counter.
inline std::uint64_t
mix_seed(std::uint64_t seed, std::uint64_t counter)
{
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

} // namespace dtdens
