#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace l0opt {

/// Worker count for per-atom parallel maps. 0 means "auto" (hardware
/// concurrency). Falls back to the L0OPT_THREADS environment variable,
/// then to 1.
int thread_count();
void set_thread_count(int n);

/// Runs fn(atom) for atom in [0, count) and gathers results in atom order.
/// Each slot is written by exactly one worker, so the gathered output is
/// bit-identical to a sequential run regardless of the thread count.
template <typename F>
auto parallel_map_atoms(int count, F&& fn) {
  using R = decltype(fn(0));
  std::vector<R> out(static_cast<size_t>(count));
  const int workers = std::min(thread_count(), count);
  if (workers <= 1) {
    for (int a = 0; a < count; ++a) out[static_cast<size_t>(a)] = fn(a);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int a = w; a < count; a += workers) out[static_cast<size_t>(a)] = fn(a);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace l0opt
