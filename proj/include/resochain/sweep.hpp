#pragma once

// Parallel evaluation over frequency grids. Output ordering always follows the
// grid; when several points fail, the error of the lowest index is rethrown so
// the reported failure does not depend on thread scheduling.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

#include "resochain/model.hpp"

namespace resochain {

/// Evaluate fn(omega_d) at every grid point using up to `threads` workers.
template <class Fn>
std::vector<SMatrix> sweep(const FrequencyGrid& grid, Fn&& fn, unsigned threads = 1) {
    const std::size_t n = grid.size();
    std::vector<SMatrix> out(n);
    std::vector<std::exception_ptr> errors(n);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                out[i] = fn(grid[i]);
            } catch (...) {
                errors[i] = std::current_exception();
                return;
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        work(0, n);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk;
            const std::size_t e = std::min(n, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

} // namespace resochain
