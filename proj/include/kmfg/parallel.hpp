#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace kmfg {

// Thread cap: KMFG_THREADS env var, else hardware concurrency.
inline unsigned max_threads() {
    static const unsigned cached = [] {
        if (const char* env = std::getenv("KMFG_THREADS")) {
            long v = std::atol(env);
            if (v >= 1) return static_cast<unsigned>(v);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? hw : 1u;
    }();
    return cached;
}

// Runs fn(i) for i in [0, count). Each index writes only its own slot, so
// results are deterministic regardless of the thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    unsigned nthreads = std::min<std::size_t>(max_threads(), count);
    if (nthreads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (unsigned t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < count; i += nthreads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace kmfg
