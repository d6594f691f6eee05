#include "l0opt/parallel.hpp"

#include <atomic>

namespace l0opt {

namespace {

std::atomic<int> g_threads{-1};  // -1: unset, 0: auto, >0: explicit

int resolve_default() {
  if (const char* env = std::getenv("L0OPT_THREADS")) {
    const std::string s(env);
    if (s == "auto") return 0;
    try {
      const int n = std::stoi(s);
      if (n >= 0) return n;
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n < 0) n = resolve_default();
  if (n == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }
  return n;
}

void set_thread_count(int n) { g_threads.store(n < 0 ? -1 : n, std::memory_order_relaxed); }

}  // namespace l0opt
