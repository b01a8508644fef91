#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace sdelab {

// Runs fn(i) for i in [0, n). Work item i always carries the same derived
// random stream, and results land in preallocated slots, so the outcome is
// identical for every thread count.
template <class Fn>
void parallel_for(std::size_t n, unsigned n_threads, Fn&& fn) {
    if (n_threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned t = static_cast<unsigned>(std::min<std::size_t>(n_threads, n));
    std::vector<std::thread> workers;
    workers.reserve(t);
    for (unsigned w = 0; w < t; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += t) fn(i);
        });
    }
    for (auto& th : workers) th.join();
}

}  // namespace sdelab
