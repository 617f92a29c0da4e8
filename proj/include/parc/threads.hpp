#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace parc {

// Worker-thread cap: min(hardware_concurrency, PARC_THREADS if set). At least 1.
inline int thread_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("PARC_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks across
// worker threads; with one worker it runs inline. Callers that accumulate
// results must do so per-index (into preallocated slots) so that the final
// reduction order is independent of the thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
    int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        int lo = static_cast<int>(static_cast<long>(n) * t / workers);
        int hi = static_cast<int>(static_cast<long>(n) * (t + 1) / workers);
        pool.emplace_back([lo, hi, &fn, &err = errors[static_cast<size_t>(t)]] {
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace parc
