#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sntf {

/// Runs fn(i) for i in [0, n) on up to `threads` workers, each owning one
/// contiguous chunk. Callers write results into per-index slots and reduce
/// afterwards in index order, so results never depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    const std::size_t chunks = std::min(workers, n);
    std::vector<std::exception_ptr> errors(chunks);
    std::vector<std::jthread> pool;
    pool.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t lo = n * c / chunks;
        const std::size_t hi = n * (c + 1) / chunks;
        pool.emplace_back([&, lo, hi, c] {
            try {
                for (std::size_t i = lo; i < hi; ++i)
                    fn(i);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    pool.clear();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace sntf
