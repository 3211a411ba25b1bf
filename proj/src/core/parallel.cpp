// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace gmbinet {
namespace {

std::atomic<int> g_override{0};

int env_threads() {
  const char* value = std::getenv("GMBI_THREADS");
  if (value == nullptr) return 1;
  const int parsed = std::atoi(value);
  return parsed > 0 ? parsed : 1;
}

}  // namespace

int thread_count() {
  const int forced = g_override.load();
  return forced > 0 ? forced : env_threads();
}

void set_thread_count(int threads) { g_override.store(std::max(threads, 0)); }

void parallel_for(int64_t count, const std::function<void(int64_t)>& fn) {
  const int64_t workers = std::min<int64_t>(thread_count(), count);
  if (workers <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int64_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (int64_t i = t; i < count; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace gmbinet
