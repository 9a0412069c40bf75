#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "blochdec/field_io.hpp"
#include "blochdec/grid.hpp"

namespace blochdec {

enum class LatticeKind { free, mathieu, kronig_penney, sampled };

/// Truncated Fourier table of a real 2pi-periodic lattice potential,
/// V(y) = sum_lambda c(lambda) exp(i lambda y). Coefficients are stored for
/// lambda in {1-2*Lambda, ..., 2*Lambda-1}, which is everything a 2*Lambda square
/// Hamiltonian block touches; anything outside reads as zero.
class PeriodicPotential {
public:
    PeriodicPotential() = default;

    LatticeKind kind() const noexcept { return kind_; }
    int truncation() const noexcept { return lambda_; }
    long max_index() const noexcept { return 2L * lambda_ - 1; }

    cplx coefficient(long lambda) const {
        if (lambda < -max_index() || lambda > max_index()) return 0.0;
        return coeffs_[static_cast<std::size_t>(lambda + max_index())];
    }

    /// Pointwise V(y). Analytic kinds are evaluated exactly (the Kronig-Penney
    /// jump included); tabulated potentials use their truncated series.
    double value(double y) const {
        switch (kind_) {
            case LatticeKind::free: return 0.0;
            case LatticeKind::mathieu: return std::cos(y);
            case LatticeKind::kronig_penney: {
                double t = std::fmod(y, two_pi);
                if (t < 0) t += two_pi;
                return (t >= 0.5 * std::numbers::pi && t <= 1.5 * std::numbers::pi) ? 0.0 : 1.0;
            }
            case LatticeKind::sampled: break;
        }
        double sum = 0.0;
        for (long l = -max_index(); l <= max_index(); ++l) sum += (coefficient(l) * std::exp(cplx(0.0, l * y))).real();
        return sum;
    }

    /// Same potential with a different truncation.
    PeriodicPotential with_truncation(int Lambda) const;

    /// Hash of kind, truncation and coefficient bytes; keys band caches.
    std::uint64_t hash() const {
        io::ByteWriter w;
        w.u32(static_cast<std::uint32_t>(kind_));
        w.u32(static_cast<std::uint32_t>(lambda_));
        for (const auto& c : coeffs_) {
            w.f64(c.real());
            w.f64(c.imag());
        }
        return io::fnv1a(w.bytes());
    }

    std::string name() const {
        switch (kind_) {
            case LatticeKind::free: return "free";
            case LatticeKind::mathieu: return "mathieu";
            case LatticeKind::kronig_penney: return "kronig_penney";
            case LatticeKind::sampled: return "sampled";
        }
        return "unknown";
    }

    const std::vector<double>& samples() const noexcept { return samples_; }

    friend PeriodicPotential free_lattice(int Lambda);
    friend PeriodicPotential mathieu(int Lambda);
    friend PeriodicPotential kronig_penney(int Lambda);
    friend PeriodicPotential from_samples(std::span<const double> samples, int Lambda);

private:
    PeriodicPotential(LatticeKind kind, int Lambda) : kind_(kind), lambda_(Lambda), coeffs_(4 * Lambda - 1, 0.0) {}
    cplx& at(long lambda) { return coeffs_[static_cast<std::size_t>(lambda + max_index())]; }

    LatticeKind kind_ = LatticeKind::free;
    int lambda_ = 1;
    std::vector<cplx> coeffs_ = std::vector<cplx>(3, 0.0);
    std::vector<double> samples_;
};

inline PeriodicPotential free_lattice(int Lambda) {
    if (Lambda < 1) fail(ErrorCode::TruncationTooSmall, "Lambda must be >= 1");
    return PeriodicPotential(LatticeKind::free, Lambda);
}

/// V(y) = cos y: only c(+-1) = 1/2.
inline PeriodicPotential mathieu(int Lambda) {
    if (Lambda < 2) fail(ErrorCode::TruncationTooSmall, "Mathieu potential needs Lambda >= 2");
    PeriodicPotential v(LatticeKind::mathieu, Lambda);
    v.at(1) = 0.5;
    v.at(-1) = 0.5;
    return v;
}

/// V(y) = 1 - indicator([pi/2, 3pi/2]) per period, from the exact integral:
/// c(0) = 1/2, c(lambda) = -(-1)^lambda sin(lambda pi/2)/(pi lambda).
inline PeriodicPotential kronig_penney(int Lambda) {
    if (Lambda < 2) fail(ErrorCode::TruncationTooSmall, "Kronig-Penney potential needs Lambda >= 2");
    PeriodicPotential v(LatticeKind::kronig_penney, Lambda);
    v.at(0) = 0.5;
    for (long l = 1; l <= v.max_index(); l += 2) {
        // sin(l pi/2) alternates +-1 on odd l; (-1)^l = -1.
        const double s = (l % 4 == 1) ? 1.0 : -1.0;
        const double c = s / (std::numbers::pi * static_cast<double>(l));
        v.at(l) = c;
        v.at(-l) = c;
    }
    return v;
}

/// Coefficients from n >= 4*Lambda uniform samples V(2 pi j / n), hermitized.
inline PeriodicPotential from_samples(std::span<const double> samples, int Lambda) {
    if (Lambda < 1) fail(ErrorCode::TruncationTooSmall, "Lambda must be >= 1");
    const std::size_t n = samples.size();
    if (n < 4 * static_cast<std::size_t>(Lambda))
        fail(ErrorCode::InsufficientSamples,
             std::to_string(n) + " samples cannot resolve Lambda = " + std::to_string(Lambda) + " (need >= 4*Lambda)");
    PeriodicPotential v(LatticeKind::sampled, Lambda);
    std::vector<cplx> raw(2 * static_cast<std::size_t>(v.max_index()) + 1);
    for (long l = -v.max_index(); l <= v.max_index(); ++l) {
        cplx sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double phase = -two_pi * static_cast<double>(l) * static_cast<double>(j) / static_cast<double>(n);
            sum += samples[j] * std::polar(1.0, phase);
        }
        raw[static_cast<std::size_t>(l + v.max_index())] = sum / static_cast<double>(n);
    }
    for (long l = -v.max_index(); l <= v.max_index(); ++l)
        v.at(l) = 0.5 * (raw[static_cast<std::size_t>(l + v.max_index())] +
                         std::conj(raw[static_cast<std::size_t>(-l + v.max_index())]));
    v.samples_.assign(samples.begin(), samples.end());
    return v;
}

inline PeriodicPotential PeriodicPotential::with_truncation(int Lambda) const {
    switch (kind_) {
        case LatticeKind::free: return free_lattice(Lambda);
        case LatticeKind::mathieu: return mathieu(Lambda);
        case LatticeKind::kronig_penney: return kronig_penney(Lambda);
        case LatticeKind::sampled: return from_samples(samples_, Lambda);
    }
    return *this;
}

enum class ExternalKind { none, linear, harmonic, step, sampled };

/// Slowly varying external potential U(x) on [0, 2pi].
class ExternalPotential {
public:
    ExternalPotential() = default;

    static ExternalPotential none() { return {}; }
    static ExternalPotential linear(double field) {
        ExternalPotential u;
        u.kind_ = ExternalKind::linear;
        u.field_ = field;
        return u;
    }
    static ExternalPotential harmonic() {
        ExternalPotential u;
        u.kind_ = ExternalKind::harmonic;
        return u;
    }
    static ExternalPotential step() {
        ExternalPotential u;
        u.kind_ = ExternalKind::step;
        return u;
    }
    /// Uniform periodic table on [0, 2pi), linearly interpolated.
    static ExternalPotential sampled(std::vector<double> table) {
        if (table.size() < 2) fail(ErrorCode::InsufficientSamples, "external table needs at least 2 samples");
        ExternalPotential u;
        u.kind_ = ExternalKind::sampled;
        u.table_ = std::move(table);
        return u;
    }

    ExternalKind kind() const noexcept { return kind_; }
    double field() const noexcept { return field_; }
    bool is_zero() const noexcept { return kind_ == ExternalKind::none; }
    bool smooth() const noexcept { return kind_ != ExternalKind::step; }

    /// Exact pointwise value; x must lie in [0, 2pi].
    double operator()(double x) const {
        constexpr double slack = 1e-12;
        if (!(x >= -slack && x <= two_pi + slack))
            fail(ErrorCode::OutOfDomain, "x = " + std::to_string(x) + " outside [0, 2pi]");
        return value_unchecked(x);
    }

    /// U(x) with no domain check (used after periodic wrapping).
    double value_unchecked(double x) const {
        switch (kind_) {
            case ExternalKind::none: return 0.0;
            case ExternalKind::linear: return field_ * x;
            case ExternalKind::harmonic: return (x - std::numbers::pi) * (x - std::numbers::pi);
            case ExternalKind::step:
                return (x >= 0.5 * std::numbers::pi && x <= 1.5 * std::numbers::pi) ? 1.0 : 0.0;
            case ExternalKind::sampled: {
                const double n = static_cast<double>(table_.size());
                double s = std::fmod(x / two_pi * n, n);
                if (s < 0) s += n;
                const auto i = static_cast<std::size_t>(s);
                const double w = s - static_cast<double>(i);
                return (1.0 - w) * table_[i % table_.size()] + w * table_[(i + 1) % table_.size()];
            }
        }
        return 0.0;
    }

    /// dU/dx; the step potential has no classical force.
    double gradient(double x) const {
        switch (kind_) {
            case ExternalKind::none: return 0.0;
            case ExternalKind::linear: return field_;
            case ExternalKind::harmonic: return 2.0 * (x - std::numbers::pi);
            case ExternalKind::step: fail(ErrorCode::NonSmoothForce, "step potential has no derivative");
            case ExternalKind::sampled: {
                const double n = static_cast<double>(table_.size());
                double s = std::fmod(x / two_pi * n, n);
                if (s < 0) s += n;
                const auto i = static_cast<std::size_t>(s);
                return (table_[(i + 1) % table_.size()] - table_[i % table_.size()]) * n / two_pi;
            }
        }
        return 0.0;
    }

    std::string name() const {
        switch (kind_) {
            case ExternalKind::none: return "none";
            case ExternalKind::linear: return "linear:" + io::sci(field_, 6);
            case ExternalKind::harmonic: return "harmonic";
            case ExternalKind::step: return "step";
            case ExternalKind::sampled: return "sampled";
        }
        return "unknown";
    }

private:
    ExternalKind kind_ = ExternalKind::none;
    double field_ = 0.0;
    std::vector<double> table_;
};

inline double eval_external(const ExternalPotential& u, double x) { return u(x); }

inline std::vector<double> read_real_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<double> out;
    std::string token;
    while (in >> token) {
        if (token.front() == '#') {
            std::getline(in, token);
            continue;
        }
        try {
            out.push_back(std::stod(token));
        } catch (...) {
            fail(ErrorCode::InvalidConfig, "non-numeric entry '" + token + "' in " + path.string());
        }
    }
    return out;
}

/// `free | mathieu | kronig_penney | file:<path>` (file: whitespace-separated samples).
inline PeriodicPotential parse_lattice(const std::string& spec, int Lambda) {
    if (spec == "mathieu") return mathieu(Lambda);
    if (spec == "kronig_penney") return kronig_penney(Lambda);
    if (spec == "free" || spec == "none") return free_lattice(Lambda);
    if (spec.rfind("file:", 0) == 0) {
        const auto table = read_real_table(spec.substr(5));
        return from_samples(table, Lambda);
    }
    fail(ErrorCode::InvalidConfig, "unknown lattice '" + spec + "'");
}

/// `none | linear:<E> | harmonic | step | file:<path>`.
inline ExternalPotential parse_external(const std::string& spec) {
    if (spec == "none") return ExternalPotential::none();
    if (spec == "harmonic") return ExternalPotential::harmonic();
    if (spec == "step") return ExternalPotential::step();
    if (spec.rfind("linear:", 0) == 0) {
        try {
            return ExternalPotential::linear(std::stod(spec.substr(7)));
        } catch (const std::logic_error&) {
            fail(ErrorCode::InvalidConfig, "bad field strength in '" + spec + "'");
        }
    }
    if (spec.rfind("file:", 0) == 0) return ExternalPotential::sampled(read_real_table(spec.substr(5)));
    fail(ErrorCode::InvalidConfig, "unknown external potential '" + spec + "'");
}

}  // namespace blochdec
