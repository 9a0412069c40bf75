#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "blochdec/band.hpp"
#include "blochdec/potential.hpp"

using namespace blochdec;

namespace {

constexpr double pi = std::numbers::pi;

/// Composite Simpson rule for a smooth complex integrand on [a, b].
template <class F>
cplx simpson(F f, double a, double b, int n = 4000) {
    const double h = (b - a) / n;
    cplx s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

/// (1/2pi) int V e^{-i lambda y} over one period, V = 1 on [0, pi/2) u (3pi/2, 2pi).
cplx kp_coefficient_by_quadrature(long lambda) {
    auto e = [lambda](double y) { return std::exp(cplx(0.0, -static_cast<double>(lambda) * y)); };
    return (simpson(e, 0.0, 0.5 * pi) + simpson(e, 1.5 * pi, 2.0 * pi)) / (2.0 * pi);
}

cplx series(const PeriodicPotential& v, double y) {
    cplx s = 0.0;
    for (long l = -v.max_index(); l <= v.max_index(); ++l) s += v.coefficient(l) * std::exp(cplx(0.0, l * y));
    return s;
}

}  // namespace

TEST(Mathieu, Coefficients) {
    const auto v = mathieu(8);
    EXPECT_DOUBLE_EQ(v.coefficient(1).real(), 0.5);
    EXPECT_DOUBLE_EQ(v.coefficient(-1).real(), 0.5);
    EXPECT_EQ(v.coefficient(0), cplx(0.0));
    EXPECT_EQ(v.coefficient(2), cplx(0.0));
    EXPECT_EQ(v.coefficient(1000), cplx(0.0));
    EXPECT_NEAR(series(v, 0.0).real(), 1.0, 1e-15);
}

TEST(KronigPenney, CoefficientsMatchQuadrature) {
    const auto v = kronig_penney(16);
    EXPECT_NEAR(v.coefficient(0).real(), 0.5, 1e-15);
    EXPECT_NEAR(v.coefficient(1).real(), 1.0 / pi, 1e-15);
    EXPECT_NEAR(std::abs(v.coefficient(2)), 0.0, 1e-15);
    for (long l = -v.max_index(); l <= v.max_index(); ++l)
        EXPECT_NEAR(std::abs(v.coefficient(l) - kp_coefficient_by_quadrature(l)), 0.0, 1e-10) << "lambda " << l;
}

TEST(KronigPenney, PointwiseValue) {
    const auto v = kronig_penney(4);
    EXPECT_EQ(v.value(0.0), 1.0);
    EXPECT_EQ(v.value(pi), 0.0);
    EXPECT_EQ(v.value(2.0 * pi + pi), 0.0);
    EXPECT_EQ(v.value(-0.1), 1.0);
}

TEST(Potential, SeriesIsRealAndHermitian) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> y(0.0, 2.0 * pi);
    std::vector<double> samples(64);
    for (std::size_t j = 0; j < samples.size(); ++j) samples[j] = std::exp(std::sin(2.0 * pi * j / 64.0));
    for (const auto& v : {mathieu(8), kronig_penney(8), free_lattice(8), from_samples(samples, 8)}) {
        for (long l = 0; l <= v.max_index(); ++l)
            EXPECT_NEAR(std::abs(v.coefficient(-l) - std::conj(v.coefficient(l))), 0.0, 1e-12);
        for (int i = 0; i < 128; ++i) EXPECT_LE(std::abs(series(v, y(rng)).imag()), 1e-10);
    }
}

TEST(FromSamples, BandLimitedInputIsExact) {
    std::vector<double> c(64), one(64, 1.0);
    for (std::size_t j = 0; j < 64; ++j) c[j] = std::cos(2.0 * pi * j / 64.0);
    const auto v = from_samples(c, 16), m = mathieu(16);
    for (long l = -v.max_index(); l <= v.max_index(); ++l)
        EXPECT_NEAR(std::abs(v.coefficient(l) - m.coefficient(l)), 0.0, 1e-12);
    const auto u = from_samples(one, 16);
    EXPECT_NEAR(u.coefficient(0).real(), 1.0, 1e-15);
    for (long l = 1; l <= u.max_index(); ++l) EXPECT_NEAR(std::abs(u.coefficient(l)), 0.0, 1e-14);
}

TEST(FromSamples, SeriesRoundTrip) {
    // Sampling the Mathieu series and transforming back is the identity on coefficients.
    const auto m = mathieu(8);
    std::vector<double> s(32);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = series(m, 2.0 * pi * j / 32.0).real();
    const auto v = from_samples(s, 8);
    for (long l = -m.max_index(); l <= m.max_index(); ++l)
        EXPECT_NEAR(std::abs(v.coefficient(l) - m.coefficient(l)), 0.0, 1e-12);
}

TEST(FromSamples, KronigPenneyJump) {
    std::vector<double> s(4096);
    const auto kp = kronig_penney(4);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = kp.value(2.0 * pi * j / 4096.0);
    EXPECT_NEAR(from_samples(s, 4).coefficient(1).real(), 1.0 / pi, 1e-3);
}

TEST(FromSamples, TooFewSamples) {
    std::vector<double> s(7, 0.0);
    try {
        (void)from_samples(s, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientSamples);
    }
}

TEST(Potential, HashSeparatesPotentials) {
    EXPECT_NE(mathieu(8).hash(), kronig_penney(8).hash());
    EXPECT_NE(mathieu(8).hash(), mathieu(16).hash());
    EXPECT_EQ(mathieu(8).hash(), mathieu(8).hash());
}

TEST(External, Values) {
    EXPECT_EQ(ExternalPotential::harmonic()(pi), 0.0);
    EXPECT_EQ(ExternalPotential::step()(pi), 1.0);
    EXPECT_EQ(ExternalPotential::step()(0.0), 0.0);
    EXPECT_EQ(ExternalPotential::step()(0.5 * pi), 1.0);
    EXPECT_EQ(ExternalPotential::linear(1.0)(2.0), 2.0);
    EXPECT_EQ(eval_external(ExternalPotential::none(), 1.0), 0.0);
    EXPECT_NEAR(ExternalPotential::harmonic().gradient(0.0), -2.0 * pi, 1e-15);
}

TEST(External, OutOfDomainAndNonSmooth) {
    try {
        (void)ExternalPotential::harmonic()(7.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfDomain);
    }
    try {
        (void)ExternalPotential::step().gradient(1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonSmoothForce);
    }
}

TEST(External, SampledInterpolates) {
    const auto u = ExternalPotential::sampled({0.0, 1.0, 2.0, 3.0});
    EXPECT_NEAR(u(0.25 * pi), 0.5, 1e-14);
    EXPECT_NEAR(u(1.75 * pi), 1.5, 1e-14);  // wraps back to the first sample
}

TEST(Parse, Specs) {
    EXPECT_EQ(parse_lattice("mathieu", 4).kind(), LatticeKind::mathieu);
    EXPECT_EQ(parse_lattice("kronig_penney", 4).kind(), LatticeKind::kronig_penney);
    EXPECT_EQ(parse_external("linear:2.5").field(), 2.5);
    EXPECT_EQ(parse_external("harmonic").kind(), ExternalKind::harmonic);
    EXPECT_THROW(parse_lattice("graphene", 4), Error);
    EXPECT_THROW(parse_external("linear:x"), Error);
}

TEST(Hamiltonian, FreeDiagonal) {
    const auto h = assemble_hk(free_lattice(1), 0.0, 1);
    ASSERT_EQ(h.order(), 2);
    EXPECT_DOUBLE_EQ(h(0, 0).real(), 0.5);
    EXPECT_DOUBLE_EQ(h(1, 1).real(), 0.0);
    EXPECT_EQ(h(0, 1), cplx(0.0));
}

TEST(Hamiltonian, MathieuTridiagonal) {
    const auto h = assemble_hk(mathieu(2), 0.25, 2);
    const double diag[] = {1.53125, 0.28125, 0.03125, 0.78125};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const cplx expect = i == j ? cplx(diag[i]) : (std::abs(i - j) == 1 ? cplx(0.5) : cplx(0.0));
            EXPECT_NEAR(std::abs(h(i, j) - expect), 0.0, 1e-15) << i << "," << j;
        }
    EXPECT_EQ(h.hermiticity_defect(), 0.0);
}

TEST(Hamiltonian, TruncationTooSmall) {
    try {
        (void)assemble_hk(mathieu(2), 0.0, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TruncationTooSmall);
    }
}
