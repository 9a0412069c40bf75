#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace blochdec {

namespace detail {
inline std::atomic<unsigned>& thread_override() {
    static std::atomic<unsigned> value{0};
    return value;
}
}  // namespace detail

/// Worker count: explicit override, else BLOCHDEC_THREADS, else hardware concurrency.
inline unsigned thread_count() {
    if (unsigned forced = detail::thread_override().load(); forced > 0) return forced;
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BLOCHDEC_THREADS")) {
        try {
            long cap = std::stol(env);
            if (cap >= 1) return std::min<unsigned>(hw, static_cast<unsigned>(cap));
        } catch (...) {
        }
    }
    return hw;
}

inline void set_thread_count(unsigned n) { detail::thread_override().store(n); }

/// Runs body(i) for i in [0, n). Iterations must be independent; each writes only
/// its own outputs, so results do not depend on the worker count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    unsigned workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace blochdec
