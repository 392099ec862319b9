#pragma once

/**
 * Bounded-concurrency fan-out. Tasks pull indices from a shared atomic
 * counter; the first exception wins and is rethrown on the caller after
 * all workers drain. Callers write results into pre-sized slots, so
 * aggregation order never depends on the thread schedule.
 */

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ppcv {

inline void parallel_for(std::size_t n, int concurrency, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (concurrency <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load(std::memory_order_relaxed)) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(concurrency), n);
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ppcv
