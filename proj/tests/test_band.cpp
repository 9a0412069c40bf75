#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "blochdec/band.hpp"
#include "blochdec/band_cache.hpp"

using namespace blochdec;

namespace {

constexpr double pi = std::numbers::pi;

template <class F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvalidConfig;
}

/// j-th smallest eigenvalue (0-based) of the Mathieu block at truncation Lambda by
/// Sturm-sequence bisection on the tridiagonal matrix; independent of the dense solver.
double mathieu_sturm(double k, int Lambda, int j) {
    const int n = 2 * Lambda;
    auto count_below = [&](double x) {
        int c = 0;
        double q = 1.0;
        for (int i = 0; i < n; ++i) {
            const double d = 0.5 * std::pow(k - Lambda + i, 2);
            q = d - x - (i > 0 ? 0.25 / q : 0.0);
            if (q == 0.0) q = -1e-300;
            if (q < 0.0) ++c;
        }
        return c;
    };
    double lo = -2.0, hi = 0.5 * std::pow(Lambda + 1.0, 2) + 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (count_below(mid) > j ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Classical dispersion relation for the unit-height, half-filling Kronig-Penney cell
/// (well and barrier both of width pi) with H = -1/2 d^2 + V. Returns D(E) - cos(2 pi k).
double kp_dispersion(double E, double k) {
    const double a = pi, b = pi, al = std::sqrt(2.0 * E);
    double d;
    if (E > 1.0) {
        const double be = std::sqrt(2.0 * (E - 1.0));
        d = std::cos(al * a) * std::cos(be * b) - (al * al + be * be) / (2.0 * al * be) * std::sin(al * a) * std::sin(be * b);
    } else {
        const double ka = std::sqrt(2.0 * (1.0 - E));
        d = std::cos(al * a) * std::cosh(ka * b) + (ka * ka - al * al) / (2.0 * al * ka) * std::sin(al * a) * std::sinh(ka * b);
    }
    return d - std::cos(2.0 * pi * k);
}

/// Root of the dispersion relation closest to E0, by bracketing and bisection.
double kp_root(double k, double E0) {
    auto f = [k](double E) { return kp_dispersion(E, k); };
    double lo = E0, hi = E0;
    for (int i = 1; i < 2000; ++i) {
        const double a = E0 - 1e-5 * i, b = E0 + 1e-5 * i;
        if (a > 0 && f(a) * f(E0) <= 0) {
            lo = a, hi = E0;
            break;
        }
        if (f(b) * f(E0) <= 0) {
            lo = E0, hi = b;
            break;
        }
    }
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (lo + hi);
        (f(lo) * f(m) <= 0 ? hi : lo) = m;
    }
    return 0.5 * (lo + hi);
}

const BandTable& mathieu_table() {
    static const BandTable t = solve_bands(mathieu(32), build_grid(1.0 / 16.0, 16), 32, 8);
    return t;
}

}  // namespace

TEST(Bands, FreeParticleExact) {
    const auto g = build_grid(1.0 / 8.0, 8);
    const auto t = solve_bands(free_lattice(8), g, 8, 6);
    for (std::size_t l = 0; l < g.cells(); ++l) {
        std::vector<double> e;
        for (int lam = -8; lam < 8; ++lam) e.push_back(0.5 * std::pow(g.k(l) + lam, 2));
        std::sort(e.begin(), e.end());
        for (int m = 0; m < 6; ++m) EXPECT_NEAR(t.energy(m, l), e[m], 1e-12);
    }
    EXPECT_NEAR(t.energy(0, 4), 0.0, 1e-14);        // k = 0
    EXPECT_NEAR(t.energy(0, 0), 0.125, 1e-14);      // k = -1/2
    EXPECT_NEAR(t.energy(1, 0), 0.125, 1e-14);      // touching second band
    EXPECT_NEAR(eval_band(t, 0, 0.5), 0.125, 1e-14);
}

TEST(Bands, MathieuMatchesLargeTruncationOracle) {
    const auto t = solve_bands(mathieu(32), build_grid(1.0 / 8.0, 8), 32, 4);
    for (std::size_t l = 0; l < 8; ++l)
        for (int m = 0; m < 4; ++m) EXPECT_NEAR(t.energy(m, l), mathieu_sturm(t.grid().k(l), 256, m), 1e-10);
}

TEST(Bands, KronigPenneyDispersionRelation) {
    const auto g = build_grid(0.25, 4);
    const auto t32 = solve_bands(kronig_penney(32), g, 32, 3);
    const auto t64 = solve_bands(kronig_penney(64), g, 64, 3);
    double e32 = 0, e64 = 0;
    for (std::size_t l = 0; l < g.cells(); ++l)
        for (int m = 0; m < 3; ++m) {
            e32 = std::max(e32, std::abs(t32.energy(m, l) - kp_root(g.k(l), t32.energy(m, l))));
            e64 = std::max(e64, std::abs(t64.energy(m, l) - kp_root(g.k(l), t64.energy(m, l))));
        }
    EXPECT_LE(e64, 1e-6);
    // Galerkin error of the jump potential decays like Lambda^-3.
    EXPECT_NEAR(std::log2(e32 / e64), 3.0, 0.3);
}

TEST(Bands, TypeInvariants) {
    const auto& t = mathieu_table();
    const auto& g = t.grid();
    for (std::size_t l = 0; l < g.cells(); ++l) {
        const auto h = assemble_hk(t.potential(), g.k(l), t.truncation()).dense();
        for (int m = 0; m < t.bands(); ++m) {
            if (m > 0) {
                EXPECT_LE(t.energy(m - 1, l), t.energy(m, l));
            }
            const auto v = t.vector(m, l);
            Eigen::Map<const Eigen::VectorXcd> vm(v.data(), static_cast<Eigen::Index>(v.size()));
            EXPECT_NEAR(vm.squaredNorm(), 1.0, 1e-12);
            EXPECT_LE((h * vm - t.energy(m, l) * vm).norm(), 1e-10 * (1.0 + std::abs(t.energy(m, l))));
            if (l + 1 < g.cells()) {
                EXPECT_GE(detail::inner(v, t.vector(m, l + 1)).real(), 0.0);
            }
        }
    }
}

TEST(Bands, EvenInQuasiMomentum) {
    const auto& t = mathieu_table();
    const std::size_t L = t.nodes();
    for (std::size_t l = 1; l < L; ++l)
        for (int m = 0; m < t.bands(); ++m) EXPECT_NEAR(t.energy(m, l), t.energy(m, L - l), 1e-10);
}

TEST(Bands, VariationalInTruncation) {
    const auto g = build_grid(0.25, 4);
    const auto V = kronig_penney(24);
    std::vector<BandTable> ts;
    for (int lam : {8, 12, 16, 24}) ts.push_back(solve_bands(V, g, lam, 4));
    for (std::size_t i = 1; i < ts.size(); ++i)
        for (std::size_t l = 0; l < 4; ++l)
            for (int m = 0; m < 4; ++m) EXPECT_LE(ts[i].energy(m, l), ts[i - 1].energy(m, l) + 1e-12);
}

TEST(Bands, Errors) {
    const auto g = build_grid(0.25, 8);
    EXPECT_EQ(code_of([&] { (void)solve_bands(mathieu(8), g, 8, 17); }), ErrorCode::BandCountExceedsTruncation);
    EXPECT_EQ(code_of([&] { (void)solve_bands(mathieu(8), g, 4, 2); }), ErrorCode::TruncationMismatch);
    EXPECT_EQ(code_of([&] { (void)eval_band(mathieu_table(), 8, 0.0); }), ErrorCode::BandIndexOutOfRange);
    EXPECT_EQ(code_of([&] { (void)eval_band(mathieu_table(), -1, 0.0); }), ErrorCode::BandIndexOutOfRange);
}

TEST(EvalBand, NodesAndPeriodicity) {
    const auto& t = mathieu_table();
    for (std::size_t l = 0; l < t.nodes(); ++l) {
        const double k = t.grid().k(l);
        EXPECT_EQ(eval_band(t, 2, k), t.energy(2, l));
        EXPECT_NEAR(eval_band(t, 2, k + 1.0), t.energy(2, l), 1e-14);
        EXPECT_NEAR(eval_band(t, 2, k - 3.0), t.energy(2, l), 1e-14);
    }
}

TEST(EvalBand, OffNodeMatchesDirectSolve) {
    const auto t = solve_bands(mathieu(32), build_grid(1.0 / 64.0, 4), 32, 2);
    const auto direct = detail::hermitian_eigensolve(assemble_hk(mathieu(32), 0.23, 32));
    EXPECT_NEAR(eval_band(t, 0, 0.23), direct.values(0), 1e-8);
    // Slope against a centred difference of direct solves.
    const double h = 1e-4;
    const double ep = detail::hermitian_eigensolve(assemble_hk(mathieu(32), 0.23 + h, 32)).values(0);
    const double em = detail::hermitian_eigensolve(assemble_hk(mathieu(32), 0.23 - h, 32)).values(0);
    EXPECT_NEAR(band_slope(t, 0, 0.23), (ep - em) / (2 * h), 1e-6);
}

TEST(Chi, PeriodicAndNormalized) {
    const auto& t = mathieu_table();
    for (int m : {0, 3}) {
        for (std::size_t l : {0u, 5u}) {
            EXPECT_NEAR(std::abs(eval_chi(t, m, l, 0.7) - eval_chi(t, m, l, 0.7 + 2 * pi)), 0.0, 1e-12);
            // Trapezoid rule is exact for trigonometric polynomials of degree < samples.
            const int n = 256;
            double s = 0;
            for (int j = 0; j < n; ++j) s += std::norm(eval_chi(t, m, l, 2 * pi * j / n));
            EXPECT_NEAR(s * 2 * pi / n, 2 * pi, 1e-10);
        }
    }
}

TEST(Chi, FreePlaneWave) {
    const auto g = build_grid(1.0 / 8.0, 8);
    const auto t = solve_bands(free_lattice(8), g, 8, 3);
    // k = -3/8: band 1 is lambda = 0, band 2 is lambda = 1.
    const std::size_t l = 1;
    for (double y : {0.0, 0.4, 2.0}) {
        EXPECT_NEAR(std::abs(eval_chi(t, 0, l, y)), 1.0, 1e-12);
        const cplx ratio = eval_chi(t, 1, l, y) / eval_chi(t, 1, l, 0.0);
        EXPECT_NEAR(std::abs(ratio - std::exp(cplx(0, y))), 0.0, 1e-12);
    }
}

TEST(Berry, FreeLatticeVanishes) {
    const auto g = build_grid(1.0 / 8.0, 8);
    const auto t = solve_bands(free_lattice(8), g, 8, 3);
    for (std::size_t l = 2; l < 7; ++l) EXPECT_NEAR(std::abs(berry_connection(t, 0, l)), 0.0, 1e-12);
    EXPECT_EQ(code_of([&] { (void)berry_connection(t, 0, 0); }), ErrorCode::BandGapTooSmall);
}

TEST(Berry, MathieuPurelyImaginaryAndConsistent) {
    std::vector<cplx> beta;
    for (double eps : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
        const auto t = solve_bands(mathieu(16), build_grid(eps, 4), 16, 2);
        const auto b = berry_connection(t, 0, t.nodes() / 2);  // k = 0
        EXPECT_LE(std::abs(b.real()), 1e-8);
        beta.push_back(b);
    }
    // Richardson: successive differences shrink at least like dk^2.
    const double d1 = std::abs(beta[0] - beta[1]), d2 = std::abs(beta[1] - beta[2]);
    EXPECT_LE(d2, 0.3 * d1 + 1e-12);
}

TEST(Berry, CentredDifferenceOfStoredGauge) {
    const auto& t = mathieu_table();
    const double dk = t.grid().dk();
    const auto v = t.vector(1, 4), n = t.vector(1, 5), p = t.vector(1, 3);
    double fd = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) fd += (std::conj(v[i]) * (n[i] - p[i])).imag();
    EXPECT_NEAR(berry_connection(t, 1, 4).imag(), fd / (2 * dk), 1e-12);
}

TEST(EffectiveMass, FreeAndMathieu) {
    auto direct = [](double k) {
        return detail::hermitian_eigensolve(assemble_hk(mathieu(16), k, 16)).values(0);
    };
    const double h = 1e-3;
    const double oracle = h * h / (direct(h) - 2 * direct(0.0) + direct(-h));
    EXPECT_NEAR(effective_mass(solve_bands(mathieu(16), build_grid(1.0 / 32, 4), 16, 2), 0, 0.0), oracle,
                1e-5 * oracle);
    std::vector<double> ms;
    for (double eps : {1.0 / 16, 1.0 / 32, 1.0 / 64})
        ms.push_back(effective_mass(solve_bands(mathieu(16), build_grid(eps, 4), 16, 2), 0, 0.0));
    EXPECT_GT(ms.back(), 0.0);
    EXPECT_NEAR(ms[1], ms[2], 0.01 * ms[2]);
    const auto& t = mathieu_table();
    EXPECT_NEAR(effective_mass(t, 0, 0.0, 1e-3), effective_mass(t, 0, 0.0, -1e-3), 1e-9);
}

TEST(BlochCache, MatchesTableAtNodesAndUnfolds) {
    const auto& t = mathieu_table();
    BlochVectorCache cache(t, 1);
    const auto at_node = cache.at(t.grid().k(5));
    const auto v = t.vector(1, 5);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(std::abs(at_node[i] - v[i]), 0.0, 1e-10);
    const auto shifted = cache.at(t.grid().k(5) + 1.0);
    const auto expect = detail::shift_quasi_momentum(v, 1);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(std::abs(shifted[i] - expect[i]), 0.0, 1e-10);
}

TEST(BandCache, RoundTripAndRejections) {
    const auto& t = mathieu_table();
    const auto bytes = BandCacheCodec::encode(t);
    const auto back = BandCacheCodec::decode(bytes, t.potential(), t.grid());
    for (int m = 0; m < t.bands(); ++m)
        for (std::size_t l = 0; l < t.nodes(); ++l) {
            EXPECT_EQ(back.energy(m, l), t.energy(m, l));
            EXPECT_EQ(back.energy_above(l), t.energy_above(l));
            for (std::size_t i = 0; i < t.dimension(); ++i) EXPECT_EQ(back.vector(m, l)[i], t.vector(m, l)[i]);
        }
    for (int m = 0; m < t.bands(); ++m) {
        EXPECT_EQ(back.isolated(m), t.isolated(m));
        EXPECT_NEAR(back.link_phase(m), t.link_phase(m), 1e-10);
    }

    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x01;
    EXPECT_EQ(code_of([&] { (void)BandCacheCodec::decode(flipped, t.potential(), t.grid()); }), ErrorCode::CacheMismatch);
    auto shorter = bytes;
    shorter.resize(shorter.size() - 8);
    EXPECT_EQ(code_of([&] { (void)BandCacheCodec::decode(shorter, t.potential(), t.grid()); }), ErrorCode::CacheMismatch);
    EXPECT_EQ(code_of([&] { (void)BandCacheCodec::decode(bytes, kronig_penney(32), t.grid()); }), ErrorCode::CacheMismatch);
    EXPECT_EQ(code_of([&] { (void)BandCacheCodec::decode(bytes, t.potential(), build_grid(1.0 / 8, 16)); }),
              ErrorCode::CacheMismatch);
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_EQ(code_of([&] { (void)BandCacheCodec::decode(magic, t.potential(), t.grid()); }), ErrorCode::CacheMismatch);
}

TEST(BandCache, FileAndCsv) {
    const auto& t = mathieu_table();
    const auto path = std::filesystem::temp_directory_path() / "blochdec_test_bands.bdbt";
    save_band_cache(t, path);
    const auto back = load_band_cache(path, t.potential(), t.grid());
    EXPECT_EQ(back.energy(3, 7), t.energy(3, 7));
    std::filesystem::remove(path);
    const auto csv = bands_csv(t);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,E_1,E_2,E_3,E_4,E_5,E_6,E_7,E_8");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
}
