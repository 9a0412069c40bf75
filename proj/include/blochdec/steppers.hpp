#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "blochdec/band.hpp"
#include "blochdec/blochxform.hpp"
#include "blochdec/fft.hpp"
#include "blochdec/grid.hpp"
#include "blochdec/potential.hpp"

namespace blochdec {

enum class Scheme { bd, ts };
enum class SplitOrder { lie, strang };

inline std::string to_string(Scheme s) { return s == Scheme::bd ? "bd" : "ts"; }
inline std::string to_string(SplitOrder o) { return o == SplitOrder::lie ? "lie" : "strang"; }

struct StepperConfig {
    Scheme scheme = Scheme::bd;
    SplitOrder order = SplitOrder::strang;
    double dt = 0.0;
    const BandTable* bands = nullptr;          // BD
    std::optional<PeriodicPotential> lattice;  // TS; sampled pointwise at x/eps
    ExternalPotential external;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorCode::InvalidConfig, "dt must be positive");
        if (scheme == Scheme::bd) {
            if (!bands) fail(ErrorCode::InvalidConfig, "BD needs a band table");
            if (2 * static_cast<std::size_t>(bands->truncation()) <= bands->grid().resolution())
                fail(ErrorCode::TruncationMismatch, "BD needs Lambda > R/2");
        } else if (!lattice) {
            fail(ErrorCode::InvalidConfig, "TS needs a lattice potential");
        }
    }
};

/// psi * exp(-i U(x) dt / eps), pointwise.
inline WaveField external_phase(const WaveField& psi, const ExternalPotential& U, double dt, double eps) {
    WaveField out = psi;
    if (U.is_zero()) return out;
    const auto& g = psi.grid();
    for (std::size_t j = 0; j < g.size(); ++j) out[j] *= std::polar(1.0, -U(g.x_flat(j)) * dt / eps);
    return out;
}

/// Bloch-decomposition stepper with every per-step factor precomputed.
class BdStepper {
public:
    BdStepper(const BandTable& bands, ExternalPotential external, SplitOrder order, double dt)
        : bands_(bands), projector_(bands), external_(std::move(external)), order_(order), dt_(dt) {
        const double eps = bands.grid().epsilon();
        const double flow_dt = order == SplitOrder::strang ? 0.5 * dt : dt;
        flow_ = band_phases(flow_dt);
        if (!external_.is_zero()) {
            const auto& g = bands.grid();
            ext_.resize(g.size());
            for (std::size_t j = 0; j < g.size(); ++j) ext_[j] = std::polar(1.0, -external_(g.x_flat(j)) * dt / eps);
        }
    }

    const SimulationGrid& grid() const noexcept { return bands_.grid(); }
    double dt() const noexcept { return dt_; }

    WaveField step(const WaveField& psi) const {
        WaveField out = flow(psi, flow_);
        apply_external(out);
        if (order_ == SplitOrder::strang) out = flow(out, flow_);
        return out;
    }

    /// Exact periodic-lattice flow over an arbitrary time (any sign).
    WaveField periodic_flow(const WaveField& psi, double t) const { return flow(psi, band_phases(t)); }

private:
    std::vector<cplx> band_phases(double t) const {
        const double eps = bands_.grid().epsilon();
        const std::size_t L = bands_.nodes();
        std::vector<cplx> p(static_cast<std::size_t>(bands_.bands()) * L);
        for (int m = 0; m < bands_.bands(); ++m)
            for (std::size_t l = 0; l < L; ++l)
                p[static_cast<std::size_t>(m) * L + l] = std::polar(1.0, -bands_.energy(m, l) * t / eps);
        return p;
    }

    WaveField flow(const WaveField& psi, const std::vector<cplx>& phases) const {
        auto c = projector_.project(cell_forward(psi));
        auto v = c.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= phases[i];
        return cell_inverse(projector_.reconstruct(c));
    }

    void apply_external(WaveField& psi) const {
        if (ext_.empty()) return;
        for (std::size_t j = 0; j < ext_.size(); ++j) psi[j] *= ext_[j];
    }

    const BandTable& bands_;
    BandProjector projector_;
    ExternalPotential external_;
    SplitOrder order_;
    double dt_;
    std::vector<cplx> flow_;
    std::vector<cplx> ext_;
};

/// Time-splitting spectral stepper: kinetic part by a global FFT multiplier,
/// lattice plus external potential by an exact pointwise phase.
class TsStepper {
public:
    TsStepper(const SimulationGrid& grid, const PeriodicPotential& lattice, const ExternalPotential& external,
              SplitOrder order, double dt)
        : grid_(grid), order_(order), dt_(dt) {
        const double eps = grid.epsilon();
        const std::size_t n = grid.size();
        const double kin_dt = order == SplitOrder::strang ? 0.5 * dt : dt;
        kinetic_.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const auto kappa = static_cast<double>(fft::frequency(j, n));
            kinetic_[j] = std::polar(1.0 / static_cast<double>(n), -eps * kappa * kappa * kin_dt / 2.0);
        }
        potential_.resize(n);
        for (std::size_t l = 0; l < grid.cells(); ++l)
            for (std::size_t r = 0; r < grid.resolution(); ++r) {
                // x/eps = 2 pi l + y_r, so the lattice term only needs y_r.
                const double v = lattice.value(grid.y(r)) + external.value_unchecked(grid.x(l, r));
                potential_[l * grid.resolution() + r] = std::polar(1.0, -v * dt / eps);
            }
    }

    const SimulationGrid& grid() const noexcept { return grid_; }
    double dt() const noexcept { return dt_; }

    WaveField step(const WaveField& psi) const {
        WaveField out = psi;
        kinetic(out);
        for (std::size_t j = 0; j < potential_.size(); ++j) out[j] *= potential_[j];
        if (order_ == SplitOrder::strang) kinetic(out);
        return out;
    }

private:
    void kinetic(WaveField& psi) const {
        fft::transform(psi.values(), fft::Direction::forward);
        for (std::size_t j = 0; j < kinetic_.size(); ++j) psi[j] *= kinetic_[j];
        fft::transform(psi.values(), fft::Direction::backward);
    }

    SimulationGrid grid_;
    SplitOrder order_;
    double dt_;
    std::vector<cplx> kinetic_;
    std::vector<cplx> potential_;
};

/// Exact band dynamics over dt: transform, project, multiply by exp(-i E dt/eps),
/// reconstruct, transform back.
inline WaveField bd_periodic_flow(const WaveField& psi, const BandTable& bands, double dt, double eps) {
    if (std::abs(eps - bands.grid().epsilon()) > 1e-15)
        fail(ErrorCode::ShapeMismatch, "epsilon differs from the band table's grid");
    return BdStepper(bands, ExternalPotential::none(), SplitOrder::lie, 1.0).periodic_flow(psi, dt);
}

inline WaveField bd_step(const WaveField& psi, const StepperConfig& config) {
    config.validate();
    if (config.scheme != Scheme::bd) fail(ErrorCode::InvalidConfig, "bd_step needs scheme = bd");
    return BdStepper(*config.bands, config.external, config.order, config.dt).step(psi);
}

inline WaveField ts_step(const WaveField& psi, const StepperConfig& config) {
    config.validate();
    if (config.scheme != Scheme::ts) fail(ErrorCode::InvalidConfig, "ts_step needs scheme = ts");
    return TsStepper(psi.grid(), *config.lattice, config.external, config.order, config.dt).step(psi);
}

struct EvolveOptions {
    bool band_masses = false;        // per-step ||P_m psi||^2 (BD only)
    std::size_t snapshot_every = 0;  // 0: no snapshots
};

struct Trajectory {
    WaveField final;
    std::vector<double> times;
    std::vector<double> mass;
    std::vector<std::vector<double>> band_mass;  // [step][m]
    std::vector<std::pair<std::size_t, WaveField>> snapshots;

    /// max_n |mass_n - mass_0|
    double mass_drift() const {
        double d = 0.0;
        for (double m : mass) d = std::max(d, std::abs(m - mass.front()));
        return d;
    }
};

/// N steps of the configured scheme with dt = T/N (config.dt is overwritten).
inline Trajectory evolve(const WaveField& psi0, StepperConfig config, double T, std::size_t N,
                         const EvolveOptions& opts = {}) {
    if (N < 1) fail(ErrorCode::InvalidConfig, "need at least one step");
    if (!(T > 0.0)) fail(ErrorCode::InvalidConfig, "T must be positive");
    config.dt = T / static_cast<double>(N);
    config.validate();

    std::function<WaveField(const WaveField&)> step;
    std::optional<BdStepper> bd;
    std::optional<TsStepper> ts;
    std::optional<BandProjector> monitor;
    if (config.scheme == Scheme::bd) {
        bd.emplace(*config.bands, config.external, config.order, config.dt);
        step = [&](const WaveField& p) { return bd->step(p); };
        if (opts.band_masses) monitor.emplace(*config.bands);
    } else {
        ts.emplace(psi0.grid(), *config.lattice, config.external, config.order, config.dt);
        step = [&](const WaveField& p) { return ts->step(p); };
    }

    Trajectory tr;
    tr.final = psi0;
    auto record = [&](std::size_t n) {
        tr.times.push_back(static_cast<double>(n) * config.dt);
        tr.mass.push_back(discrete_mass(tr.final));
        if (monitor) tr.band_mass.push_back(monitor->masses(monitor->project(cell_forward(tr.final))));
        if (opts.snapshot_every > 0 && n % opts.snapshot_every == 0) tr.snapshots.emplace_back(n, tr.final);
    };
    record(0);
    for (std::size_t n = 1; n <= N; ++n) {
        tr.final = step(tr.final);
        if (!tr.final.all_finite())
            fail(ErrorCode::NonFinite, "non-finite values after step " + std::to_string(n));
        record(n);
    }
    return tr;
}

}  // namespace blochdec
