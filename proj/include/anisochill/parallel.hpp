#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <span>
#include <thread>
#include <vector>

namespace anisochill {

namespace detail {
inline std::atomic<int>& thread_setting() {
    static std::atomic<int> n{1};
    return n;
}
inline thread_local bool in_worker = false;
} // namespace detail

/// Number of worker threads used by data-parallel loops. Results never depend
/// on this value: work is split into fixed blocks whose boundaries do not
/// depend on the thread count.
inline void set_thread_count(int n) { detail::thread_setting() = std::max(1, n); }
inline int thread_count() { return detail::thread_setting(); }

/// Runs `fn(b)` for every block index b in [0, n_blocks). Blocks are
/// distributed round-robin over the worker threads; nested calls from inside
/// a worker run sequentially.
template <class Fn>
void parallel_for(std::size_t n_blocks, Fn&& fn) {
    const int requested = thread_count();
    if (requested <= 1 || n_blocks < 2 || detail::in_worker) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    const auto workers = static_cast<std::size_t>(
        std::min<std::size_t>(static_cast<std::size_t>(requested), n_blocks));
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            detail::in_worker = true;
            try {
                for (std::size_t b = w; b < n_blocks; b += workers) fn(b);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Splits [0, n) into blocks of `block` items and calls `fn(begin, end)`.
template <class Fn>
void parallel_ranges(std::size_t n, std::size_t block, Fn&& fn) {
    const std::size_t n_blocks = (n + block - 1) / block;
    parallel_for(n_blocks, [&](std::size_t b) {
        const std::size_t begin = b * block;
        fn(begin, std::min(n, begin + block));
    });
}

/// Pairwise (tree) summation with a fixed base block; the association order
/// depends only on the length of the input.
inline double pairwise_sum(std::span<const double> v) {
    constexpr std::size_t base = 32;
    if (v.size() <= base) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Deterministic parallel reduction of `term(k)` over k in [0, n).
template <class Term>
double reduce_sum(std::size_t n, Term&& term) {
    constexpr std::size_t block = 4096;
    const std::size_t n_blocks = (n + block - 1) / block;
    std::vector<double> partial(n_blocks, 0.0);
    parallel_for(n_blocks, [&](std::size_t b) {
        const std::size_t begin = b * block;
        const std::size_t end = std::min(n, begin + block);
        std::vector<double> local(end - begin);
        for (std::size_t k = begin; k < end; ++k) local[k - begin] = term(k);
        partial[b] = pairwise_sum(local);
    });
    return pairwise_sum(partial);
}

} // namespace anisochill
