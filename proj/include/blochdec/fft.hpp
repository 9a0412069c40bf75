#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>

#include "blochdec/error.hpp"

namespace blochdec::fft {

enum class Direction : int { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

/// Unnormalized in-place batch of `howmany` length-n complex DFTs with the given
/// element stride and batch distance. Forward uses exp(-2 pi i j k / n).
class Plan {
public:
    Plan(int n, int howmany, int stride, int dist, Direction dir) : n_(n), howmany_(howmany), stride_(stride), dist_(dist) {
        // Planning needs scratch storage; FFTW_ESTIMATE never writes to it.
        const std::size_t extent = static_cast<std::size_t>((n - 1) * stride + (howmany - 1) * dist + 1);
        auto* scratch = fftw_alloc_complex(extent);
        plan_ = fftw_plan_many_dft(1, &n_, howmany, scratch, nullptr, stride, dist, scratch, nullptr, stride, dist,
                                   static_cast<int>(dir), FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(scratch);
        if (!plan_) fail(ErrorCode::IoFailure, "FFTW could not create a plan");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() { fftw_destroy_plan(plan_); }

    void execute(std::span<std::complex<double>> data) const {
        auto* p = reinterpret_cast<fftw_complex*>(data.data());
        fftw_execute_dft(plan_, p, p);
    }

    int length() const noexcept { return n_; }
    int batch() const noexcept { return howmany_; }

private:
    int n_, howmany_, stride_, dist_;
    fftw_plan plan_ = nullptr;
};

/// Process-wide plan cache. FFTW's planner is not re-entrant, so creation is
/// serialized; executing a cached plan on distinct arrays is thread-safe.
inline const Plan& plan(int n, int howmany, int stride, int dist, Direction dir) {
    using Key = std::tuple<int, int, int, int, int>;
    static std::mutex mutex;
    static std::map<Key, std::unique_ptr<Plan>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[Key{n, howmany, stride, dist, static_cast<int>(dir)}];
    if (!slot) slot = std::make_unique<Plan>(n, howmany, stride, dist, dir);
    return *slot;
}

/// Contiguous length-n transform.
inline void transform(std::span<std::complex<double>> data, Direction dir) {
    plan(static_cast<int>(data.size()), 1, 1, 0, dir).execute(data);
}

/// `rows` contiguous rows of length `cols`, each transformed along the row.
inline void transform_rows(std::span<std::complex<double>> data, std::size_t rows, std::size_t cols, Direction dir) {
    plan(static_cast<int>(cols), static_cast<int>(rows), 1, static_cast<int>(cols), dir).execute(data);
}

/// Row-major rows x cols array, each column transformed (length `rows`).
inline void transform_columns(std::span<std::complex<double>> data, std::size_t rows, std::size_t cols, Direction dir) {
    plan(static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(cols), 1, dir).execute(data);
}

/// Signed frequency of DFT bin j for length n: 0..n/2-1, then -n/2..-1.
inline long frequency(std::size_t j, std::size_t n) {
    const auto s = static_cast<long>(j);
    const auto N = static_cast<long>(n);
    return s < (N + 1) / 2 ? s : s - N;
}

}  // namespace blochdec::fft
