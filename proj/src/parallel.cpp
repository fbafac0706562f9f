// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ldlb {

namespace {
std::atomic<std::size_t> g_workers{1};
// Nested regions run inline on the calling worker.
thread_local bool t_in_region = false;
}

void set_num_workers(std::size_t n) {
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    g_workers.store(n);
}

std::size_t num_workers() { return g_workers.load(); }

void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t chunks = chunk_count(n, chunk);
    const std::size_t workers = std::min(num_workers(), chunks);
    if (workers <= 1 || t_in_region) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        const bool outer = t_in_region;
        t_in_region = true;
        for (std::size_t c = next++; c < chunks; c = next++) {
            try {
                fn(c, c * chunk, std::min(n, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
        t_in_region = outer;
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace ldlb
