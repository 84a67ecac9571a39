#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace cavfb {

// Deterministic work split over [0, n): contiguous blocks, one thread each.
// Bodies must write only to their own index-addressed slots and must not
// throw; results are then identical for any worker count.
template <typename F>
void parallel_for(std::size_t n, unsigned n_workers, F&& body) {
    if (n == 0) return;
    if (n_workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t w = std::min<std::size_t>(n_workers, n);
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t lo = n * t / w;
        const std::size_t hi = n * (t + 1) / w;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace cavfb
