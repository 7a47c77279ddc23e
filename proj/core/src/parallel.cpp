// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mrvox {

namespace {

std::atomic<std::size_t> g_override{0};
std::atomic<bool> g_has_override{false};
// Nested parallel_for calls run inline on the calling worker.
thread_local bool t_in_parallel = false;

std::size_t env_workers() {
  const char* raw = std::getenv("MRVOX_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    return static_cast<std::size_t>(std::stoul(raw));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::size_t worker_count() {
  std::size_t requested = g_has_override ? g_override.load() : env_workers();
  if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
  return requested;
}

void set_worker_count(std::size_t workers) {
  g_override = workers;
  g_has_override = workers != 0;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
  if (n == 0) return;
  const std::size_t workers = std::min(worker_count(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
  if (workers <= 1 || t_in_parallel) {
    body(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&](std::size_t w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    t_in_parallel = true;
    try {
      body(begin, end);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run, w);
  run(0);
  t_in_parallel = false;
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mrvox
