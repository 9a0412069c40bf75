#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "blochdec/band.hpp"
#include "blochdec/fft.hpp"
#include "blochdec/grid.hpp"
#include "blochdec/parallel.hpp"
#include "blochdec/potential.hpp"

namespace blochdec {

/// Uniform periodic grid x_j = 2 pi j / n on [0, 2 pi) for the slow variables.
struct MacroGrid {
    std::size_t n = 0;
    double dx() const { return two_pi / static_cast<double>(n); }
    double x(std::size_t j) const { return two_pi * static_cast<double>(j) / static_cast<double>(n); }
};

/// Initial WKB phase with its first two derivatives.
struct InitialPhase {
    std::string name;
    std::function<double(double)> phi, dphi, d2phi;

    static InitialPhase zero() {
        return {"zero", [](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
    }
    /// phi = -cos x, so grad phi = sin x.
    static InitialPhase neg_cos() {
        return {"neg-cos", [](double x) { return -std::cos(x); }, [](double x) { return std::sin(x); },
                [](double x) { return std::cos(x); }};
    }
    static InitialPhase parse(const std::string& s) {
        if (s == "zero") return zero();
        if (s == "neg-cos") return neg_cos();
        fail(ErrorCode::InvalidConfig, "unknown phase preset '" + s + "' (zero | neg-cos)");
    }
};

/// exp(-5 (x - pi)^2), the unnormalized slow envelope of the WKB examples.
inline double wkb_gaussian(double x) {
    const double d = x - std::numbers::pi;
    return std::exp(-5.0 * d * d);
}

/// psi(x) = f(x) chi_m(x/eps, phi'(x)) exp(i phi(x)/eps) on the two-scale grid.
/// chi at off-node quasi-momenta comes from `cache` in the table's gauge; samples
/// with f = 0 are skipped.
template <class F>
WaveField build_wkb_initial(BlochVectorCache& cache, F&& f, const InitialPhase& phi0, const SimulationGrid& grid) {
    WaveField out(grid);
    const double eps = grid.epsilon();
    for (std::size_t l = 0; l < grid.cells(); ++l)
        for (std::size_t r = 0; r < grid.resolution(); ++r) {
            const double x = grid.x(l, r);
            const cplx amp = f(x);
            if (amp == cplx(0.0)) continue;
            const auto chi = cache.at(phi0.dphi(x));
            out(l, r) = amp * chi_from_coefficients(chi, grid.y(r)) * std::polar(1.0, phi0.phi(x) / eps);
        }
    return out;
}

struct CausticReport {
    bool detected = false;
    double t_c = std::numeric_limits<double>::infinity();
    double threshold = 0.0;
    std::vector<double> times;
    std::vector<double> history;  // compressive max |phi_xx| per step
};

/// phi_m(t, x) and p = d_x phi_m on a macroscopic grid, one row per time level.
struct PhaseTrajectory {
    MacroGrid grid;
    int band = 0;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<std::vector<double>> p;
    std::vector<std::vector<double>> phi;
    CausticReport caustic;
};

namespace detail {

inline double minmod(double a, double b) {
    if (a * b <= 0.0) return 0.0;
    return std::abs(a) < std::abs(b) ? a : b;
}

inline std::size_t wrap(long j, std::size_t n) {
    const auto N = static_cast<long>(n);
    return static_cast<std::size_t>(((j % N) + N) % N);
}

/// dU/dx at the macro nodes by a periodic centred difference of U samples. Exact for
/// the harmonic and linear potentials away from x = 0, and symmetric across it.
inline std::vector<double> macro_force(const ExternalPotential& U, const MacroGrid& g) {
    std::vector<double> u(g.n), du(g.n);
    for (std::size_t j = 0; j < g.n; ++j) u[j] = U.value_unchecked(g.x(j));
    for (std::size_t j = 0; j < g.n; ++j)
        du[j] = (u[wrap(static_cast<long>(j) + 1, g.n)] - u[wrap(static_cast<long>(j) - 1, g.n)]) / (2.0 * g.dx());
    return du;
}

inline std::vector<double> centred_derivative(const std::vector<double>& v, double dx) {
    const std::size_t n = v.size();
    std::vector<double> d(n);
    for (std::size_t j = 0; j < n; ++j)
        d[j] = (v[wrap(static_cast<long>(j) + 1, n)] - v[wrap(static_cast<long>(j) - 1, n)]) / (2.0 * dx);
    return d;
}

/// Periodic antiderivative: spectral integral of (p - mean p), plus the mean slope
/// times (x - mean x), plus a constant making the mean equal `level`.
inline std::vector<double> phase_from_gradient(const std::vector<double>& p, const MacroGrid& g, double level) {
    const std::size_t n = p.size();
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(n);
    std::vector<cplx> h(n);
    for (std::size_t j = 0; j < n; ++j) h[j] = p[j] - mean;
    fft::transform(h, fft::Direction::forward);
    for (std::size_t j = 0; j < n; ++j) {
        const auto kappa = fft::frequency(j, n);
        h[j] = (kappa == 0 || 2 * static_cast<std::size_t>(std::abs(kappa)) == n) ? cplx(0.0)
                                                                                  : h[j] / cplx(0.0, static_cast<double>(kappa));
        h[j] /= static_cast<double>(n);
    }
    fft::transform(h, fft::Direction::backward);
    const double xbar = std::numbers::pi * static_cast<double>(n - 1) / static_cast<double>(n);
    std::vector<double> phi(n);
    double m = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        phi[j] = h[j].real() + mean * (g.x(j) - xbar);
        m += phi[j];
    }
    m /= static_cast<double>(n);
    for (auto& v : phi) v += level - m;
    return phi;
}

/// Four-point Lagrange interpolation of periodic samples at arbitrary x.
template <class T>
T periodic_cubic(const std::vector<T>& v, const MacroGrid& g, double x) {
    const double s = x / g.dx();
    const double fl = std::floor(s);
    const double t = s - fl;
    const auto j = static_cast<long>(fl);
    const double w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    const double w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    const double w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    const double w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    const std::size_t n = g.n;
    return w0 * v[wrap(j - 1, n)] + w1 * v[wrap(j, n)] + w2 * v[wrap(j + 1, n)] + w3 * v[wrap(j + 2, n)];
}

}  // namespace detail

struct HjOptions {
    double caustic_factor = 50.0;
    bool stop_at_caustic = true;
    /// Throw CausticReached instead of returning a truncated trajectory.
    bool require_caustic_free = false;
    /// Points watched by the caustic detector; empty watches the whole grid. Used to
    /// ignore folds where the WKB amplitude is negligible, such as the one the
    /// periodically extended harmonic potential seeds at its kink at x = 0.
    std::function<bool(double)> watch;
};

/// Watch window {x : |f(x)| >= rel * max |f|} for a slow amplitude f.
template <class F>
std::function<bool(double)> amplitude_window(F f, std::size_t samples = 4096, double rel = 1e-6) {
    double fmax = 0.0;
    for (std::size_t j = 0; j < samples; ++j)
        fmax = std::max(fmax, std::abs(f(two_pi * static_cast<double>(j) / static_cast<double>(samples))));
    const double cut = rel * fmax;
    return [f, cut](double x) { return std::abs(f(x)) >= cut; };
}

/// Band Hamilton-Jacobi equation phi_t + E_m(phi_x) + U = 0 on a periodic macro grid.
///
/// Solved for p = phi_x, p_t + (E_m(p))_x = -U', by the relaxed (zero relaxation time)
/// Jin-Xin scheme: characteristic variables w+- = E(p) +- a p with a = 1.1 max|E_m'|,
/// minmod MUSCL reconstruction, upwind flux (w+_L + w-_R)/2 and SSP-RK2 in time.
/// phi is recovered each step from p and the cell average, d(mean phi)/dt = -mean(E(p) + U).
/// Caustic onset is the first time the compressive part of |phi_xx| (points where
/// E''(p) p_x < 0, i.e. neighbouring characteristics converge) exceeds caustic_factor
/// times its initial value, floored at 1.
inline PhaseTrajectory hj_solve(const BandTable& bands, int m, const ExternalPotential& U, const InitialPhase& phi0,
                                double t_end, std::size_t nx, double dt, const HjOptions& opts = {}) {
    bands.check_band(m);
    if (nx < 8) fail(ErrorCode::InvalidConfig, "HJ grid needs at least 8 points");
    if (!(dt > 0.0) || !(t_end >= 0.0)) fail(ErrorCode::InvalidConfig, "HJ needs dt > 0 and t_end >= 0");
    const MacroGrid g{nx};
    const double dx = g.dx();
    const double smax = max_band_slope(bands, m);
    if (smax > 0.0 && dt > 0.5 * dx / smax)
        fail(ErrorCode::CFLViolation, "dt = " + std::to_string(dt) + " exceeds 0.5 dx / max|dE/dk| = " +
                                          std::to_string(0.5 * dx / smax));
    const double a = std::max(1.1 * smax, 1e-12);
    const auto force = detail::macro_force(U, g);
    std::vector<double> uext(nx);
    for (std::size_t j = 0; j < nx; ++j) uext[j] = U.value_unchecked(g.x(j));

    auto E = [&](double p) { return eval_band(bands, m, p); };

    // Right-hand side of p_t = -(flux)_x - U' and of the mean-phase ODE.
    auto rhs = [&](const std::vector<double>& p, std::vector<double>& dp) -> double {
        const std::size_t n = p.size();
        std::vector<double> e(n), wp(n), wm(n);
        parallel_for(n, [&](std::size_t j) { e[j] = E(p[j]); });
        for (std::size_t j = 0; j < n; ++j) {
            wp[j] = e[j] + a * p[j];
            wm[j] = e[j] - a * p[j];
        }
        std::vector<double> flux(n);  // flux[j] at x_{j+1/2}
        for (std::size_t j = 0; j < n; ++j) {
            const auto jl = static_cast<long>(j);
            const std::size_t jm = detail::wrap(jl - 1, n), jp = detail::wrap(jl + 1, n), jpp = detail::wrap(jl + 2, n);
            const double up_left = wp[j] + 0.5 * detail::minmod(wp[j] - wp[jm], wp[jp] - wp[j]);
            const double dn_right = wm[jp] - 0.5 * detail::minmod(wm[jp] - wm[j], wm[jpp] - wm[jp]);
            flux[j] = 0.5 * (up_left + dn_right);
        }
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            dp[j] = -(flux[j] - flux[detail::wrap(static_cast<long>(j) - 1, n)]) / dx - force[j];
            mean += e[j] + uext[j];
        }
        return -mean / static_cast<double>(n);
    };

    std::vector<char> watched(nx, 1);
    if (opts.watch)
        for (std::size_t j = 0; j < nx; ++j) watched[j] = opts.watch(g.x(j)) ? 1 : 0;
    auto compressive_curvature = [&](const std::vector<double>& p) {
        const auto px = detail::centred_derivative(p, dx);
        double best = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (watched[j] && band_curvature(bands, m, p[j]) * px[j] < 0.0) best = std::max(best, std::abs(px[j]));
        return best;
    };

    PhaseTrajectory tr;
    tr.grid = g;
    tr.band = m;
    tr.dt = dt;
    std::vector<double> p(nx);
    double level = 0.0;
    for (std::size_t j = 0; j < nx; ++j) {
        p[j] = phi0.dphi(g.x(j));
        level += phi0.phi(g.x(j));
    }
    level /= static_cast<double>(nx);

    auto push = [&](double t) {
        tr.times.push_back(t);
        tr.p.push_back(p);
        tr.phi.push_back(detail::phase_from_gradient(p, g, level));
    };
    push(0.0);
    const double k0 = compressive_curvature(p);
    tr.caustic.threshold = opts.caustic_factor * std::max(k0, 1.0);
    tr.caustic.times.push_back(0.0);
    tr.caustic.history.push_back(k0);

    const auto steps = static_cast<std::size_t>(std::llround(std::ceil(t_end / dt - 1e-9)));
    std::vector<double> k1(nx), k2(nx), p1(nx);
    for (std::size_t s = 1; s <= steps; ++s) {
        const double h = std::min(dt, t_end - tr.times.back());
        const double m1 = rhs(p, k1);
        for (std::size_t j = 0; j < nx; ++j) p1[j] = p[j] + h * k1[j];
        const double m2 = rhs(p1, k2);
        for (std::size_t j = 0; j < nx; ++j) p[j] = 0.5 * (p[j] + p1[j] + h * k2[j]);
        level += 0.5 * h * (m1 + m2);
        for (double v : p)
            if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "HJ solution became non-finite at step " + std::to_string(s));

        const double t = tr.times.back() + h;
        const double kc = compressive_curvature(p);
        tr.caustic.times.push_back(t);
        tr.caustic.history.push_back(kc);
        if (!tr.caustic.detected && kc > tr.caustic.threshold) {
            tr.caustic.detected = true;
            // Linear interpolation of the crossing inside the last step.
            const double prev = tr.caustic.history[tr.caustic.history.size() - 2];
            const double w = (tr.caustic.threshold - prev) / (kc - prev);
            tr.caustic.t_c = t - h + std::clamp(w, 0.0, 1.0) * h;
            if (opts.require_caustic_free)
                fail(ErrorCode::CausticReached, "caustic at t_c = " + std::to_string(tr.caustic.t_c) +
                                                    " before t_end = " + std::to_string(t_end));
            if (opts.stop_at_caustic) break;
        }
        push(t);
    }
    return tr;
}

/// Largest HJ step allowed on an nx grid, times `cfl` (at most 0.5), capped at `cap`.
inline double hj_stable_dt(const BandTable& bands, int m, std::size_t nx, double cfl = 0.45, double cap = 1e-3) {
    const double smax = max_band_slope(bands, m);
    if (smax <= 0.0) return cap;
    return std::min(cap, cfl * (two_pi / static_cast<double>(nx)) / smax);
}

/// Caustic detection on nx and 2 nx, each at its own stable step.
struct CausticRefinement {
    CausticReport coarse, fine;
    double t_c() const { return fine.t_c; }
    /// |t_c(2 nx) - t_c(nx)|; infinite unless both grids detect a caustic.
    double shift() const {
        if (!coarse.detected || !fine.detected) return std::numeric_limits<double>::infinity();
        return std::abs(fine.t_c - coarse.t_c);
    }
};

inline CausticRefinement detect_caustic(const BandTable& bands, int m, const ExternalPotential& U,
                                        const InitialPhase& phi0, double t_end, std::size_t nx,
                                        HjOptions opts = {}) {
    opts.stop_at_caustic = true;
    opts.require_caustic_free = false;
    CausticRefinement r;
    r.coarse = hj_solve(bands, m, U, phi0, t_end, nx, hj_stable_dt(bands, m, nx), opts).caustic;
    r.fine = hj_solve(bands, m, U, phi0, t_end, 2 * nx, hj_stable_dt(bands, m, 2 * nx), opts).caustic;
    return r;
}

/// a_m(t, x) on the HJ grid at every HJ time level.
struct AmplitudeTrajectory {
    MacroGrid grid;
    std::vector<double> times;
    std::vector<std::vector<cplx>> a;

    double mass(std::size_t i) const {
        double s = 0.0;
        for (const auto& v : a[i]) s += std::norm(v);
        return s * grid.dx();
    }
};

struct TransportOptions {
    /// Multiplier on the Berry term; 0 switches it off for regression checks.
    double berry_scale = 1.0;
};

/// Transport a_t + c a_x + (c_x / 2) a - beta U_x a = 0 with c = E_m'(p) along a phase
/// trajectory. Strang splitting: half step of the exact local factor
/// exp(-c_x/2 + beta U_x), semi-Lagrangian cubic advection over the full step with a
/// midpoint departure point, then the other half of the local factor.
template <class F>
AmplitudeTrajectory transport_solve(const BandTable& bands, int m, const ExternalPotential& U,
                                    const PhaseTrajectory& phase, F&& a0, const TransportOptions& opts = {}) {
    bands.check_band(m);
    const MacroGrid g = phase.grid;
    const std::size_t n = g.n;
    const auto force = detail::macro_force(U, g);

    struct Coeffs {
        std::vector<double> c;
        std::vector<cplx> local;
    };
    auto coefficients = [&](const std::vector<double>& p) {
        Coeffs k;
        k.c.resize(n);
        k.local.resize(n);
        const auto px = detail::centred_derivative(p, g.dx());
        parallel_for(n, [&](std::size_t j) {
            k.c[j] = band_slope(bands, m, p[j]);
            const double cx = band_curvature(bands, m, p[j]) * px[j];
            cplx beta = 0.0;
            if (opts.berry_scale != 0.0 && force[j] != 0.0) beta = opts.berry_scale * berry_connection_at(bands, m, p[j]);
            k.local[j] = -0.5 * cx + beta * force[j];
        });
        return k;
    };

    AmplitudeTrajectory out;
    out.grid = g;
    std::vector<cplx> a(n);
    for (std::size_t j = 0; j < n; ++j) a[j] = a0(g.x(j));
    out.times.push_back(phase.times.front());
    out.a.push_back(a);

    Coeffs now = coefficients(phase.p.front());
    std::vector<cplx> next(n);
    for (std::size_t s = 1; s < phase.times.size(); ++s) {
        const double h = phase.times[s] - phase.times[s - 1];
        Coeffs after = coefficients(phase.p[s]);
        for (std::size_t j = 0; j < n; ++j) a[j] *= std::exp(0.5 * h * now.local[j]);
        std::vector<double> cmid(n);
        for (std::size_t j = 0; j < n; ++j) cmid[j] = 0.5 * (now.c[j] + after.c[j]);
        parallel_for(n, [&](std::size_t j) {
            const double x = g.x(j);
            const double xm = x - 0.5 * h * cmid[j];
            const double xd = x - h * detail::periodic_cubic(cmid, g, xm);
            next[j] = detail::periodic_cubic(a, g, xd);
        });
        a.swap(next);
        for (std::size_t j = 0; j < n; ++j) {
            a[j] *= std::exp(0.5 * h * after.local[j]);
            if (!std::isfinite(a[j].real()) || !std::isfinite(a[j].imag()))
                fail(ErrorCode::NonFinite, "amplitude became non-finite at step " + std::to_string(s));
        }
        now = std::move(after);
        out.times.push_back(phase.times[s]);
        out.a.push_back(a);
    }
    return out;
}

/// psi_sc(x) = a(x) chi_m(x/eps, p(x)) exp(i phi(x)/eps) at HJ time level `level`,
/// with a, p and phi interpolated from the macro grid (cubic, periodic). Samples whose
/// amplitude is below 1e-12 of the maximum are set to zero.
inline WaveField reconstruct_sc(const PhaseTrajectory& phase, const AmplitudeTrajectory& amp, std::size_t level,
                                BlochVectorCache& cache, const SimulationGrid& grid) {
    if (level >= phase.times.size() || level >= amp.times.size())
        fail(ErrorCode::InvalidConfig, "time level outside the WKB trajectory");
    const MacroGrid& g = phase.grid;
    const auto& a = amp.a[level];
    const auto& p = phase.p[level];
    const auto& phi = phase.phi[level];
    double amax = 0.0;
    for (const auto& v : a) amax = std::max(amax, std::abs(v));
    const double cut = 1e-12 * amax;
    const double eps = grid.epsilon();
    WaveField out(grid);
    const bool aligned = grid.size() % g.n == 0;
    const std::size_t stride = aligned ? grid.size() / g.n : 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.x_flat(j);
        cplx av;
        double pv, fv;
        if (aligned && j % stride == 0) {
            av = a[j / stride];
            pv = p[j / stride];
            fv = phi[j / stride];
        } else {
            av = detail::periodic_cubic(a, g, x);
            pv = detail::periodic_cubic(p, g, x);
            fv = detail::periodic_cubic(phi, g, x);
        }
        if (std::abs(av) <= cut) continue;
        const auto chi = cache.at(pv);
        out[j] = av * chi_from_coefficients(chi, grid.y(j % grid.resolution())) * std::polar(1.0, fv / eps);
    }
    return out;
}

struct Bicharacteristic {
    std::vector<double> t, X, Xi;
};

/// X' = E_m'(Xi), Xi' = -U'(X) by classical RK4. Xi is folded only for band
/// evaluation; X is wrapped into [0, 2 pi) when the force is evaluated.
inline Bicharacteristic bicharacteristics(const BandTable& bands, int m, const ExternalPotential& U, double x0,
                                          double xi0, double t_end, double dt) {
    bands.check_band(m);
    if (!U.smooth()) fail(ErrorCode::NonSmoothForce, "bicharacteristics need a smooth external potential");
    if (!(dt > 0.0)) fail(ErrorCode::InvalidConfig, "dt must be positive");
    auto force = [&](double x) {
        const double w = x - two_pi * std::floor(x / two_pi);
        return U.gradient(w);
    };
    auto f = [&](double, double xi) { return band_slope(bands, m, xi); };
    Bicharacteristic b;
    double t = 0.0, X = x0, Xi = xi0;
    b.t.push_back(t);
    b.X.push_back(X);
    b.Xi.push_back(Xi);
    while (t < t_end - 1e-12) {
        const double h = std::min(dt, t_end - t);
        const double k1x = f(X, Xi), k1p = -force(X);
        const double k2x = f(X + 0.5 * h * k1x, Xi + 0.5 * h * k1p), k2p = -force(X + 0.5 * h * k1x);
        const double k3x = f(X + 0.5 * h * k2x, Xi + 0.5 * h * k2p), k3p = -force(X + 0.5 * h * k2x);
        const double k4x = f(X + h * k3x, Xi + h * k3p), k4p = -force(X + h * k3x);
        X += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        Xi += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        t += h;
        b.t.push_back(t);
        b.X.push_back(X);
        b.Xi.push_back(Xi);
    }
    return b;
}

}  // namespace blochdec
