#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace evo {

// Process-wide worker cap. 0 means "use hardware concurrency".
inline std::atomic<int>& max_threads_slot() {
    static std::atomic<int> slot{0};
    return slot;
}

inline void set_max_threads(int n) { max_threads_slot().store(n < 0 ? 0 : n); }

inline int effective_threads() {
    int cap = max_threads_slot().load();
    unsigned hw = std::thread::hardware_concurrency();
    int n = cap > 0 ? cap : (hw > 0 ? static_cast<int>(hw) : 1);
    return n < 1 ? 1 : n;
}

// Runs body(i) for i in [0, n). Each index must write only to its own slot of
// any shared output, so results do not depend on scheduling or worker count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    if (n == 0) return;
    int workers = effective_threads();
    if (workers == 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    if (static_cast<std::size_t>(workers) > n) workers = static_cast<int>(n);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mutex;

    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load(std::memory_order_relaxed)) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace evo
