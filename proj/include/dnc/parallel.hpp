#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace dnc {

/// Worker count: DNC_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("DNC_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each task
/// must own its state. If tasks throw, the exception of the lowest index is
/// rethrown after all workers finish.
inline void parallel_for(int n, const std::function<void(int)>& fn, int max_workers = 0) {
    if (n <= 0) return;
    const int workers = std::min(n, max_workers > 0 ? max_workers : worker_count());
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto run = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dnc
