#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "blochdec/fft.hpp"
#include "blochdec/grid.hpp"
#include "blochdec/parallel.hpp"
#include "blochdec/potential.hpp"

namespace blochdec {

/// Dense Hermitian matrix of order 2*Lambda in the plane-wave basis
/// lambda = -Lambda, ..., Lambda-1 (row/column i <-> lambda = i - Lambda).
class HermitianMatrix {
public:
    explicit HermitianMatrix(Eigen::MatrixXcd a) : a_(std::move(a)) {}

    Eigen::Index order() const noexcept { return a_.rows(); }
    cplx operator()(Eigen::Index i, Eigen::Index j) const { return a_(i, j); }
    const Eigen::MatrixXcd& dense() const noexcept { return a_; }

    double hermiticity_defect() const { return (a_ - a_.adjoint()).cwiseAbs().maxCoeff(); }

private:
    Eigen::MatrixXcd a_;
};

/// H(k)_{ij} = V(i - j) + delta_ij (k - Lambda + i)^2 / 2 (zero-based i, j).
inline HermitianMatrix assemble_hk(const PeriodicPotential& V, double k, int Lambda) {
    if (Lambda < 1) fail(ErrorCode::TruncationTooSmall, "Lambda must be >= 1");
    if (V.truncation() < Lambda)
        fail(ErrorCode::TruncationTooSmall, "potential stores |lambda| <= " + std::to_string(V.max_index()) +
                                                ", assembly at Lambda = " + std::to_string(Lambda) + " needs " +
                                                std::to_string(2 * Lambda - 1));
    const Eigen::Index n = 2 * Lambda;
    Eigen::MatrixXcd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = V.coefficient(static_cast<long>(i - j));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double q = k - Lambda + static_cast<double>(i);
        a(i, i) += 0.5 * q * q;
    }
    return HermitianMatrix(std::move(a));
}

namespace detail {

struct EigenPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXcd vectors;  // columns, unit norm, ascending eigenvalues
};

inline EigenPairs hermitian_eigensolve(const HermitianMatrix& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
    if (es.info() != Eigen::Success) fail(ErrorCode::EigensolverFailure, "dense Hermitian eigensolver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

inline cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

/// Coefficient vector of chi(., k + shift) given chi(., k): c'(lambda) = c(lambda + shift),
/// entries pushed past the truncation are dropped.
inline std::vector<cplx> shift_quasi_momentum(std::span<const cplx> v, long shift) {
    const auto n = static_cast<long>(v.size());
    std::vector<cplx> out(v.size(), 0.0);
    for (long i = 0; i < n; ++i) {
        const long src = i + shift;
        if (src >= 0 && src < n) out[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(src)];
    }
    return out;
}

/// Phase of a vector fixed by making its largest-magnitude entry real positive.
inline void anchor_phase(std::span<cplx> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best]) * (1.0 + 1e-12)) best = i;
    if (std::abs(v[best]) == 0.0) return;
    const cplx rot = std::conj(v[best]) / std::abs(v[best]);
    for (auto& c : v) c *= rot;
}

/// Rotates v so that <ref, v> has argument `target`. Returns |<ref, v>|.
inline double align_phase(std::span<const cplx> ref, std::span<cplx> v, double target = 0.0) {
    const cplx ov = inner(ref, v);
    const double mag = std::abs(ov);
    if (mag < 1e-8) {
        anchor_phase(v);
        return mag;
    }
    const cplx rot = std::polar(1.0, target) * std::conj(ov) / mag;
    for (auto& c : v) c *= rot;
    return mag;
}

inline double fold_quasi_momentum(double k) { return k - std::floor(k + 0.5); }

}  // namespace detail

inline constexpr double band_gap_tolerance = 1e-8;

/// Lowest M Bloch bands at every quasi-momentum node of a grid.
///
/// Band indices are zero-based. Eigenvectors are Fourier coefficient vectors of the
/// periodic part chi_m(., k) over lambda = -Lambda..Lambda-1, unit Euclidean norm.
/// Gauge: phase anchored at k_0 (largest entry real positive), parallel transported
/// along the k nodes, and for bands isolated over the whole zone the closure phase
/// across k = 1/2 is spread uniformly over the links, so the gauge is smooth and
/// periodic in the sense chi(lambda, k + 1) = chi(lambda + 1, k).
class BandTable {
public:
    const SimulationGrid& grid() const noexcept { return grid_; }
    const PeriodicPotential& potential() const noexcept { return potential_; }
    int bands() const noexcept { return M_; }
    int truncation() const noexcept { return lambda_; }
    std::size_t dimension() const noexcept { return 2 * static_cast<std::size_t>(lambda_); }
    std::size_t nodes() const noexcept { return grid_.cells(); }
    const std::string& gauge_tag() const noexcept { return gauge_tag_; }

    double energy(int m, std::size_t l) const { return energies_[index(m, l)]; }
    /// E_{M+1}(k_l), the first band not stored (infinity when M = 2*Lambda).
    double energy_above(std::size_t l) const { return above_[l]; }
    std::span<const cplx> vector(int m, std::size_t l) const {
        return std::span<const cplx>(vectors_).subspan(index(m, l) * dimension(), dimension());
    }
    /// Uniform per-link phase of band m's gauge (zero unless the band is isolated).
    double link_phase(int m) const { return link_phase_[static_cast<std::size_t>(m)]; }
    bool isolated(int m) const { return isolated_[static_cast<std::size_t>(m)] != 0; }

    /// Smallest distance from E_m(k_l) to its neighbours among all computed bands.
    double gap(int m, std::size_t l) const {
        double g = std::numeric_limits<double>::infinity();
        if (m > 0) g = std::min(g, energy(m, l) - energy(m - 1, l));
        const double up = (m + 1 < M_) ? energy(m + 1, l) : above_[l];
        g = std::min(g, up - energy(m, l));
        return g;
    }

    void check_band(int m) const {
        if (m < 0 || m >= M_)
            fail(ErrorCode::BandIndexOutOfRange,
                 "band " + std::to_string(m) + " outside [0, " + std::to_string(M_) + ")");
    }

    /// Trigonometric interpolant of E_m (period 1 in k) and its k-derivatives.
    double interpolate(int m, double k, int derivative = 0) const;

    /// Independent copy with every stored eigenvector multiplied by a random unit phase.
    BandTable rephased(std::uint64_t seed) const {
        BandTable t = *this;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> angle(0.0, two_pi);
        for (std::size_t v = 0; v < energies_.size(); ++v) {
            const cplx rot = std::polar(1.0, angle(rng));
            for (std::size_t i = 0; i < dimension(); ++i) t.vectors_[v * dimension() + i] *= rot;
        }
        t.gauge_tag_ = "random-phase";
        return t;
    }

    friend BandTable solve_bands(const PeriodicPotential&, const SimulationGrid&, int, int);
    friend class BandCacheCodec;

private:
    std::size_t index(int m, std::size_t l) const { return static_cast<std::size_t>(m) * grid_.cells() + l; }
    void build_interpolants();

    SimulationGrid grid_;
    PeriodicPotential potential_;
    int M_ = 0;
    int lambda_ = 0;
    std::vector<double> energies_;
    std::vector<double> above_;
    std::vector<cplx> vectors_;
    std::vector<double> link_phase_;
    std::vector<char> isolated_;
    std::string gauge_tag_;
    // Interpolation modes per band: L complex DFT coefficients of E_m(k_l).
    std::vector<cplx> modes_;
};

inline void BandTable::build_interpolants() {
    const std::size_t L = grid_.cells();
    modes_.assign(static_cast<std::size_t>(M_) * L, 0.0);
    for (int m = 0; m < M_; ++m) {
        std::span<cplx> row(modes_.data() + static_cast<std::size_t>(m) * L, L);
        for (std::size_t l = 0; l < L; ++l) row[l] = energy(m, l);
        fft::transform(row, fft::Direction::forward);
        for (auto& c : row) c /= static_cast<double>(L);
    }
}

inline double BandTable::interpolate(int m, double k, int derivative) const {
    check_band(m);
    const std::size_t L = grid_.cells();
    const double s = k - grid_.k(0);
    const cplx* c = modes_.data() + static_cast<std::size_t>(m) * L;
    // sum over signed frequencies j with the Nyquist term split symmetrically.
    const cplx z = std::polar(1.0, two_pi * s);
    double sum = (derivative == 0) ? c[0].real() : 0.0;
    cplx zj = 1.0;
    const std::size_t half = L / 2;
    for (std::size_t j = 1; j <= half; ++j) {
        zj *= z;
        const double w = two_pi * static_cast<double>(j);
        cplx dpos = 1.0, dneg = 1.0;
        for (int d = 0; d < derivative; ++d) {
            dpos *= cplx(0.0, w);
            dneg *= cplx(0.0, -w);
        }
        const cplx pos = c[j] * zj * dpos;
        const cplx neg = c[L - j] * std::conj(zj) * dneg;
        if (2 * j == L)
            sum += 0.5 * (pos + c[j] * std::conj(zj) * dneg).real();
        else
            sum += (pos + neg).real();
    }
    return sum;
}

/// Dense solve of H(k_l) for every node, M lowest pairs, smooth periodic gauge.
inline BandTable solve_bands(const PeriodicPotential& V, const SimulationGrid& grid, int Lambda, int M) {
    if (M < 1 || M > 2 * Lambda)
        fail(ErrorCode::BandCountExceedsTruncation,
             "M = " + std::to_string(M) + " bands need 1 <= M <= 2*Lambda = " + std::to_string(2 * Lambda));
    if (2 * static_cast<std::size_t>(Lambda) <= grid.resolution())
        fail(ErrorCode::TruncationMismatch, "Lambda = " + std::to_string(Lambda) + " must exceed R/2 = " +
                                                std::to_string(grid.resolution() / 2));
    if (V.truncation() < Lambda)
        fail(ErrorCode::TruncationTooSmall, "potential truncation " + std::to_string(V.truncation()) +
                                                " is below the band truncation " + std::to_string(Lambda));

    BandTable t;
    t.grid_ = grid;
    t.potential_ = V;
    t.M_ = M;
    t.lambda_ = Lambda;
    const std::size_t L = grid.cells();
    const std::size_t dim = t.dimension();
    t.energies_.assign(static_cast<std::size_t>(M) * L, 0.0);
    t.above_.assign(L, std::numeric_limits<double>::infinity());
    t.vectors_.assign(static_cast<std::size_t>(M) * L * dim, 0.0);

    parallel_for(L, [&](std::size_t l) {
        const auto pairs = detail::hermitian_eigensolve(assemble_hk(V, grid.k(l), Lambda));
        for (int m = 0; m < M; ++m) {
            t.energies_[t.index(m, l)] = pairs.values(m);
            cplx* dst = t.vectors_.data() + t.index(m, l) * dim;
            for (std::size_t i = 0; i < dim; ++i) dst[i] = pairs.vectors(static_cast<Eigen::Index>(i), m);
        }
        if (static_cast<std::size_t>(M) < dim) t.above_[l] = pairs.values(M);
    });

    t.link_phase_.assign(static_cast<std::size_t>(M), 0.0);
    t.isolated_.assign(static_cast<std::size_t>(M), 0);
    for (int m = 0; m < M; ++m) {
        auto vec = [&](std::size_t l) { return std::span<cplx>(t.vectors_.data() + t.index(m, l) * dim, dim); };
        detail::anchor_phase(vec(0));
        for (std::size_t l = 1; l < L; ++l) detail::align_phase(vec(l - 1), vec(l));

        double min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < L; ++l) min_gap = std::min(min_gap, t.gap(m, l));
        if (L < 2 || !(min_gap > band_gap_tolerance)) continue;
        t.isolated_[static_cast<std::size_t>(m)] = 1;

        const auto wrapped = detail::shift_quasi_momentum(vec(0), 1);
        const cplx closure = detail::inner(vec(L - 1), wrapped);
        if (std::abs(closure) < 1e-8) continue;
        const double theta = std::arg(closure);
        t.link_phase_[static_cast<std::size_t>(m)] = theta / static_cast<double>(L);
        for (std::size_t l = 1; l < L; ++l) {
            const cplx rot = std::polar(1.0, theta * static_cast<double>(l) / static_cast<double>(L));
            for (auto& c : vec(l)) c *= rot;
        }
    }
    t.gauge_tag_ = "anchor-max-real;parallel-transport;uniform-closure";
    t.build_interpolants();
    return t;
}

/// E_m(k) for any real k: folded into [-1/2, 1/2), exact at nodes, trigonometric
/// interpolation in between.
inline double eval_band(const BandTable& table, int m, double k) {
    table.check_band(m);
    const double kf = detail::fold_quasi_momentum(k);
    const double pos = (kf - table.grid().k(0)) * static_cast<double>(table.nodes());
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9) return table.energy(m, static_cast<std::size_t>(nearest) % table.nodes());
    return table.interpolate(m, kf, 0);
}

/// dE_m/dk from the trigonometric interpolant.
inline double band_slope(const BandTable& table, int m, double k) { return table.interpolate(m, detail::fold_quasi_momentum(k), 1); }

/// d^2E_m/dk^2 from the trigonometric interpolant.
inline double band_curvature(const BandTable& table, int m, double k) {
    return table.interpolate(m, detail::fold_quasi_momentum(k), 2);
}

/// Largest |dE_m/dk| over a fine sampling of the zone.
inline double max_band_slope(const BandTable& table, int m) {
    const std::size_t samples = std::max<std::size_t>(512, 8 * table.nodes());
    double best = 0.0;
    for (std::size_t i = 0; i < samples; ++i)
        best = std::max(best, std::abs(band_slope(table, m, -0.5 + static_cast<double>(i) / static_cast<double>(samples))));
    return best;
}

/// chi_m(y, k_l) = sum_lambda c(lambda) exp(i lambda y).
inline cplx eval_chi(const BandTable& table, int m, std::size_t l, double y) {
    table.check_band(m);
    const auto v = table.vector(m, l);
    const long Lambda = table.truncation();
    cplx sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) sum += v[i] * std::exp(cplx(0.0, (static_cast<long>(i) - Lambda) * y));
    return sum;
}

/// Berry connection <chi_m, d_k chi_m> at node l, in the coefficient inner product
/// (the L^2 product of chi normalized to unit mass per cell). Centered difference
/// over the neighbouring nodes, wrapping across the zone edge with the Bloch
/// shift; only the imaginary part is kept since Re<v, dv> = d|v|^2/2 = 0.
inline cplx berry_connection(const BandTable& table, int m, std::size_t l) {
    table.check_band(m);
    const std::size_t L = table.nodes();
    if (L < 3) fail(ErrorCode::BandGapTooSmall, "Berry connection needs at least three k nodes");
    if (!(table.gap(m, l) > band_gap_tolerance))
        fail(ErrorCode::BandGapTooSmall, "band " + std::to_string(m) + " is degenerate at k = " +
                                             std::to_string(table.grid().k(l)));
    const auto v = table.vector(m, l);
    std::vector<cplx> next, prev;
    if (l + 1 < L)
        next.assign(table.vector(m, l + 1).begin(), table.vector(m, l + 1).end());
    else
        next = detail::shift_quasi_momentum(table.vector(m, 0), 1);
    if (l > 0)
        prev.assign(table.vector(m, l - 1).begin(), table.vector(m, l - 1).end());
    else
        prev = detail::shift_quasi_momentum(table.vector(m, L - 1), -1);
    const cplx forward = detail::inner(v, next);
    const cplx backward = detail::inner(v, prev);
    return {0.0, (forward - backward).imag() / (2.0 * table.grid().dk())};
}

/// Berry connection at arbitrary k: linear interpolation between nodes (periodic).
inline cplx berry_connection_at(const BandTable& table, int m, double k) {
    const std::size_t L = table.nodes();
    const double pos = (detail::fold_quasi_momentum(k) - table.grid().k(0)) * static_cast<double>(L);
    const auto l0 = static_cast<std::size_t>(std::floor(pos)) % L;
    const double w = pos - std::floor(pos);
    return (1.0 - w) * berry_connection(table, m, l0) + w * berry_connection(table, m, (l0 + 1) % L);
}

/// m* = 1 / E_m''(k0), second-order central difference on the interpolant.
inline double effective_mass(const BandTable& table, int m, double k0, double h = 1e-3) {
    const double e0 = table.interpolate(m, detail::fold_quasi_momentum(k0));
    const double ep = table.interpolate(m, detail::fold_quasi_momentum(k0 + h));
    const double em = table.interpolate(m, detail::fold_quasi_momentum(k0 - h));
    const double curvature = (ep - 2.0 * e0 + em) / (h * h);
    if (std::abs(curvature) < 1e-10)
        fail(ErrorCode::DegenerateCurvature, "band curvature vanishes at k0 = " + std::to_string(k0));
    return 1.0 / curvature;
}

/// Off-node Bloch vectors chi_m(., k) for arbitrary real k, in the table's gauge.
///
/// A fresh dense solve at the folded, 1e-6-quantized quasi-momentum is aligned to the
/// nearest table node so that its overlap phase matches the table's per-link phase,
/// then shifted by the Bloch relation chi(lambda, k + n) = chi(lambda + n, k) to the
/// unfolded k. Results are cached per quantized folded k.
class BlochVectorCache {
public:
    explicit BlochVectorCache(const BandTable& table, int m) : table_(&table), m_(m) { table.check_band(m); }

    std::vector<cplx> at(double k) {
        const double kf = detail::fold_quasi_momentum(k);
        const long n = std::lround(k - kf);
        const long long key = std::llround(kf * 1e6);
        const std::vector<cplx>* folded = nullptr;
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) folded = &it->second;
        }
        if (!folded) {
            auto v = solve(static_cast<double>(key) * 1e-6);
            std::lock_guard lock(mutex_);
            folded = &cache_.emplace(key, std::move(v)).first->second;
        }
        if (n == 0) return *folded;
        return detail::shift_quasi_momentum(*folded, n);
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return cache_.size();
    }

private:
    std::vector<cplx> solve(double kq) const {
        const auto& t = *table_;
        const std::size_t L = t.nodes();
        const double pos = (kq - t.grid().k(0)) * static_cast<double>(L);
        const auto nearest = static_cast<long>(std::lround(pos));
        const std::size_t dim = t.dimension();
        if (std::abs(pos - static_cast<double>(nearest)) < 1e-9 && nearest < static_cast<long>(L)) {
            const auto v = t.vector(m_, static_cast<std::size_t>(nearest));
            return {v.begin(), v.end()};
        }
        const auto pairs = detail::hermitian_eigensolve(assemble_hk(t.potential(), kq, t.truncation()));
        double g = std::numeric_limits<double>::infinity();
        if (m_ + 1 < static_cast<int>(dim)) g = pairs.values(m_ + 1) - pairs.values(m_);
        if (m_ > 0) g = std::min(g, pairs.values(m_) - pairs.values(m_ - 1));
        if (!(g > band_gap_tolerance))
            fail(ErrorCode::BandGapTooSmall, "band " + std::to_string(m_) + " is degenerate at k = " + std::to_string(kq));
        std::vector<cplx> v(dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] = pairs.vectors(static_cast<Eigen::Index>(i), m_);
        std::vector<cplx> ref;
        if (nearest >= static_cast<long>(L))
            ref = detail::shift_quasi_momentum(t.vector(m_, 0), 1);
        else {
            const auto r = t.vector(m_, static_cast<std::size_t>(nearest));
            ref.assign(r.begin(), r.end());
        }
        const double offset = (pos - static_cast<double>(nearest));
        detail::align_phase(ref, v, t.link_phase(m_) * offset);
        return v;
    }

    const BandTable* table_;
    int m_;
    mutable std::mutex mutex_;
    std::map<long long, std::vector<cplx>> cache_;
};

/// chi(y) from a coefficient vector over lambda = -Lambda..Lambda-1.
inline cplx chi_from_coefficients(std::span<const cplx> v, double y) {
    const long Lambda = static_cast<long>(v.size() / 2);
    // exp(i lambda y) by recurrence from lambda = -Lambda.
    const cplx step = std::polar(1.0, y);
    cplx e = std::polar(1.0, -static_cast<double>(Lambda) * y);
    cplx sum = 0.0;
    for (const auto& c : v) {
        sum += c * e;
        e *= step;
    }
    return sum;
}

}  // namespace blochdec
