#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "blochdec/blochxform.hpp"

using namespace blochdec;

namespace {

constexpr double pi = std::numbers::pi;

WaveField random_field(const SimulationGrid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    WaveField f(g);
    for (auto& v : f.values()) v = {n(rng), n(rng)};
    return f;
}

double max_diff(std::span<const cplx> a, std::span<const cplx> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// Band masses ||P_m psi||^2 of the Gaussian from its continuous Fourier series:
/// e^{inx} with n = L (k_l + lambda) is the lambda-th plane wave of the Bloch sector k_l.
std::vector<double> continuous_band_masses(const BandTable& t) {
    const auto& g = t.grid();
    const double L = static_cast<double>(g.cells());
    const long Lambda = t.truncation();
    std::vector<double> out(static_cast<std::size_t>(t.bands()), 0.0);
    for (std::size_t l = 0; l < g.cells(); ++l)
        for (int m = 0; m < t.bands(); ++m) {
            const auto v = t.vector(m, l);
            cplx a = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double n = L * (g.k(l) + static_cast<double>(static_cast<long>(i) - Lambda));
                const cplx hat = std::pow(10.0 / pi, 0.25) * std::sqrt(pi / 5.0) / (2.0 * pi) * std::exp(-n * n / 20.0) *
                                 std::polar(1.0, -n * pi);
                a += std::conj(v[i]) * hat;
            }
            out[static_cast<std::size_t>(m)] += 2.0 * pi * std::norm(a);
        }
    return out;
}

}  // namespace

TEST(CellTransform, MatchesDirectSum) {
    for (double eps : {1.0, 1.0 / 3.0, 1.0 / 8.0}) {
        const auto g = build_grid(eps, 8);
        const auto psi = random_field(g, 7);
        const auto tilde = cell_forward(psi);
        const std::size_t L = g.cells();
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t r = 0; r < 8; ++r) {
                cplx s = 0.0;
                for (std::size_t j = 0; j < L; ++j) s += psi(j, r) * std::polar(1.0, -2.0 * pi * g.k(l) * j);
                EXPECT_NEAR(std::abs(tilde(l, r) - s), 0.0, 1e-12);
            }
    }
}

TEST(CellTransform, UnitaryUpToCellCountAndInvertible) {
    const auto g = build_grid(1.0 / 16.0, 16);
    const auto psi = random_field(g, 9);
    const auto tilde = cell_forward(psi);
    double a = 0.0, b = 0.0;
    for (const auto& v : psi.values()) a += std::norm(v);
    for (const auto& v : tilde.values()) b += std::norm(v);
    EXPECT_NEAR(b, 16.0 * a, 1e-10 * b);
    EXPECT_LE(max_diff(cell_inverse(tilde).values(), psi.values()), 1e-13);
}

/// Largest coefficient weight of a stored band outside the R resolved plane waves.
double unresolved_tail(const BandTable& t) {
    const long Lambda = t.truncation(), half = static_cast<long>(t.grid().resolution() / 2);
    double worst = 0.0;
    for (int m = 0; m < t.bands(); ++m)
        for (std::size_t l = 0; l < t.nodes(); ++l) {
            const auto v = t.vector(m, l);
            double w = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const long lam = static_cast<long>(i) - Lambda;
                if (lam < -half || lam >= half) w += std::norm(v[i]);
            }
            worst = std::max(worst, w);
        }
    return worst;
}

TEST(BandProjection, IdempotentUpToUnresolvedTail) {
    for (auto [eps, R] : {std::pair{1.0 / 8.0, 16u}, std::pair{1.0 / 32.0, 32u}, std::pair{1.0 / 4.0, 8u}}) {
        const auto g = build_grid(eps, R);
        const int Lambda = static_cast<int>(R);
        const auto t = solve_bands(mathieu(Lambda), g, Lambda, static_cast<int>(R) / 2);
        const BandProjector P(t);
        const auto c = P.project(cell_forward(random_field(g, 21)));
        const auto c2 = P.project(P.reconstruct(c));
        double cmax = 0.0;
        for (const auto& v : c.values()) cmax = std::max(cmax, std::abs(v));
        EXPECT_LE(max_diff(c.values(), c2.values()), 10.0 * std::sqrt(unresolved_tail(t)) * cmax + 1e-12) << "R " << R;
    }
    // Smooth data: idempotent to rounding.
    const auto g = build_grid(1.0 / 32.0, 32);
    const auto t = solve_bands(mathieu(32), g, 32, 8);
    const BandProjector P(t);
    const auto c = P.project(cell_forward(sample_gaussian(g)));
    EXPECT_LE(max_diff(c.values(), P.project(P.reconstruct(c)).values()), 1e-12);
}

TEST(BandProjection, CompleteSetReproducesSmoothField) {
    for (auto [eps, R] : {std::pair{1.0 / 8.0, 16u}, std::pair{1.0 / 32.0, 32u}}) {
        const auto g = build_grid(eps, R);
        const int Lambda = static_cast<int>(R);
        const auto t = solve_bands(mathieu(Lambda), g, Lambda, static_cast<int>(R));
        const BandProjector P(t);
        const auto psi = sample_gaussian(g);
        const auto back = cell_inverse(P.reconstruct(P.project(cell_forward(psi))));
        EXPECT_LE(discrete_norms(back, psi).l2, 1e-11) << "R " << R;
    }
}

TEST(BandMasses, GaussianAgainstContinuousOracle) {
    const auto g = build_grid(1.0 / 32.0, 32);
    const auto t = solve_bands(mathieu(32), g, 32, 8);
    const auto psi = sample_gaussian(g);
    const auto ms = band_masses(psi, t);
    const auto oracle = continuous_band_masses(t);
    double total = 0.0;
    for (int m = 0; m < 8; ++m) {
        EXPECT_NEAR(ms[m].mass, oracle[m], 1e-10);
        EXPECT_NEAR(ms[m].norm * ms[m].norm, ms[m].mass, 1e-15);
        total += ms[m].mass;
    }
    EXPECT_NEAR(total, 1.0, 1e-3);
    // Lowest band dominates, second band is small.
    EXPECT_NEAR(ms[0].norm, 0.789168, 1e-6);
    EXPECT_NEAR(ms[1].norm, 0.109370, 1e-5);
}

TEST(BandMasses, SingleBandAgreesWithBatch) {
    const auto g = build_grid(1.0 / 16.0, 16);
    const auto t = solve_bands(kronig_penney(32), g, 32, 6);
    const auto psi = sample_gaussian(g);
    const auto all = band_masses(psi, t);
    for (int m = 0; m < 6; ++m) EXPECT_NEAR(band_mass(psi, t, m).mass, all[m].mass, 1e-12);
}

TEST(BandProjection, Errors) {
    const auto g = build_grid(1.0 / 4.0, 8);
    const auto t = solve_bands(mathieu(8), g, 8, 4);
    const BandProjector P(t);
    try {
        (void)P.project(cell_forward(WaveField(build_grid(1.0 / 4.0, 16))));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
    try {
        (void)P.reconstruct(BlochCoeffs(3, 4));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
    EXPECT_THROW((void)band_mass(sample_gaussian(g), t, 4), Error);
}
