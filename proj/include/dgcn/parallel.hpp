#pragma once

// Minimal bounded worker pool: runs n independent tasks, identified by index,
// on at most `workers` threads. Each task runs exactly once; the caller
// merges results after the join. Tasks must not depend on execution order,
// so results are identical for any worker count. With workers <= 1 (or a
// single task) everything runs inline on the calling thread. The first
// exception thrown by a task is rethrown after all workers join.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dgcn {

template <typename Fn>
void run_indexed_tasks(std::size_t n_tasks, std::size_t workers, Fn&& fn) {
    if (n_tasks == 0) return;
    const std::size_t n_threads = std::min(std::max<std::size_t>(workers, 1), n_tasks);
    if (n_threads == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t w = 0; w < n_threads; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n_tasks;
                     i = next.fetch_add(1))
                    fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dgcn
