#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace msfuse {

// Applies fn to every index in [0, n) with at most max_inflight worker threads.
// Results are stored by index, so output order is deterministic regardless of
// completion order. The lowest-index exception is rethrown.
template <typename Result, typename Fn>
std::vector<Result> parallel_map_ordered(std::size_t n, int max_inflight, Fn&& fn) {
    std::vector<Result> results(n);
    if (n == 0) return results;
    if (max_inflight <= 1) {
        for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
        return results;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_inflight), n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    results[i] = fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

}  // namespace msfuse
