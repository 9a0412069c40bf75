#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "blochdec/error.hpp"

namespace blochdec {

using cplx = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Two-scale discretization of the periodic domain [0, 2pi]: L lattice cells of
/// period 2*pi*eps, R samples per cell, and L quasi-momenta in [-1/2, 1/2).
///
/// Indices are zero-based here: k(l) = -1/2 + l/L, y(r) = 2*pi*r/R and
/// x(l, r) = eps*(2*pi*l + y(r)). Flattened as l*R + r the x nodes are exactly the
/// uniform grid 2*pi*j/(L*R), which lets a global FFT act on the same storage.
class SimulationGrid {
public:
    SimulationGrid() = default;

    double epsilon() const noexcept { return epsilon_; }
    std::size_t cells() const noexcept { return L_; }
    std::size_t resolution() const noexcept { return R_; }
    std::size_t size() const noexcept { return L_ * R_; }

    double k(std::size_t l) const noexcept { return -0.5 + static_cast<double>(l) / static_cast<double>(L_); }
    double y(std::size_t r) const noexcept { return two_pi * static_cast<double>(r) / static_cast<double>(R_); }
    double x(std::size_t l, std::size_t r) const noexcept {
        return two_pi * static_cast<double>(l * R_ + r) / static_cast<double>(L_ * R_);
    }
    double x_flat(std::size_t j) const noexcept { return two_pi * static_cast<double>(j) / static_cast<double>(size()); }
    double dx() const noexcept { return two_pi / static_cast<double>(size()); }
    double dk() const noexcept { return 1.0 / static_cast<double>(L_); }

    std::vector<double> k_nodes() const {
        std::vector<double> out(L_);
        for (std::size_t l = 0; l < L_; ++l) out[l] = k(l);
        return out;
    }
    std::vector<double> y_nodes() const {
        std::vector<double> out(R_);
        for (std::size_t r = 0; r < R_; ++r) out[r] = y(r);
        return out;
    }
    std::vector<double> x_nodes() const {
        std::vector<double> out(size());
        for (std::size_t j = 0; j < size(); ++j) out[j] = x_flat(j);
        return out;
    }

    friend bool operator==(const SimulationGrid&, const SimulationGrid&) = default;

    friend SimulationGrid build_grid(double epsilon, std::size_t R);

private:
    SimulationGrid(double eps, std::size_t L, std::size_t R) : epsilon_(eps), L_(L), R_(R) {}

    double epsilon_ = 1.0;
    std::size_t L_ = 1;
    std::size_t R_ = 4;
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Requires 1/epsilon integral (within 1e-9) and R >= 4 a power of two. The stored
/// epsilon is 1/L exactly, so L*eps = 1 holds to rounding.
inline SimulationGrid build_grid(double epsilon, std::size_t R) {
    if (!(epsilon > 0.0) || epsilon > 1.0)
        fail(ErrorCode::NonIntegerCellCount, "epsilon must lie in (0, 1], got " + std::to_string(epsilon));
    const double inv = 1.0 / epsilon;
    const double L = std::round(inv);
    if (std::abs(inv - L) > 1e-9)
        fail(ErrorCode::NonIntegerCellCount, "1/epsilon = " + std::to_string(inv) + " is not an integer");
    if (R < 4) fail(ErrorCode::ResolutionTooSmall, "R = " + std::to_string(R) + " < 4");
    if (!is_power_of_two(R)) fail(ErrorCode::ResolutionTooSmall, "R = " + std::to_string(R) + " is not a power of two");
    const auto cells = static_cast<std::size_t>(L);
    return SimulationGrid(1.0 / L, cells, R);
}

struct PhysicalTag {};
struct CellTag {};

/// L x R complex samples tied to a grid, row-major in (l, r).
/// WaveField holds psi(x_{l,r}); CellField holds the mixed (k_l, y_r) representation.
template <class Tag>
class GridField {
public:
    GridField() = default;
    explicit GridField(const SimulationGrid& grid) : grid_(grid), values_(grid.size()) {}
    GridField(const SimulationGrid& grid, std::vector<cplx> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.size())
            fail(ErrorCode::ShapeMismatch, "field has " + std::to_string(values_.size()) + " samples, grid needs " +
                                               std::to_string(grid_.size()));
    }

    const SimulationGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }

    cplx& operator()(std::size_t l, std::size_t r) { return values_[l * grid_.resolution() + r]; }
    const cplx& operator()(std::size_t l, std::size_t r) const { return values_[l * grid_.resolution() + r]; }
    cplx& operator[](std::size_t j) { return values_[j]; }
    const cplx& operator[](std::size_t j) const { return values_[j]; }

    std::span<cplx> values() noexcept { return values_; }
    std::span<const cplx> values() const noexcept { return values_; }
    std::span<cplx> row(std::size_t l) { return std::span<cplx>(values_).subspan(l * grid_.resolution(), grid_.resolution()); }
    std::span<const cplx> row(std::size_t l) const {
        return std::span<const cplx>(values_).subspan(l * grid_.resolution(), grid_.resolution());
    }

    bool all_finite() const {
        for (const auto& v : values_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    GridField& operator+=(const GridField& o) {
        require_same_grid(o);
        for (std::size_t j = 0; j < values_.size(); ++j) values_[j] += o.values_[j];
        return *this;
    }
    GridField& operator-=(const GridField& o) {
        require_same_grid(o);
        for (std::size_t j = 0; j < values_.size(); ++j) values_[j] -= o.values_[j];
        return *this;
    }
    GridField& operator*=(cplx s) {
        for (auto& v : values_) v *= s;
        return *this;
    }
    friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
    friend GridField operator+(GridField a, const GridField& b) { return a += b; }
    friend GridField operator*(cplx s, GridField a) { return a *= s; }

    void require_same_grid(const GridField& o) const {
        if (!(grid_ == o.grid_))
            fail(ErrorCode::ShapeMismatch, "fields live on different grids (" + std::to_string(grid_.cells()) + "x" +
                                               std::to_string(grid_.resolution()) + " vs " +
                                               std::to_string(o.grid_.cells()) + "x" +
                                               std::to_string(o.grid_.resolution()) + ")");
    }

private:
    SimulationGrid grid_;
    std::vector<cplx> values_;
};

using WaveField = GridField<PhysicalTag>;
using CellField = GridField<CellTag>;

/// Samples f at every x node.
template <class F>
WaveField sample_field(const SimulationGrid& grid, F&& f) {
    WaveField out(grid);
    for (std::size_t j = 0; j < grid.size(); ++j) out[j] = f(grid.x_flat(j));
    return out;
}

/// (10/pi)^(1/4) exp(-5 (x - pi)^2): unit-mass Gaussian centred in the domain.
inline cplx gaussian_initial(double x) {
    const double d = x - std::numbers::pi;
    return std::pow(10.0 / std::numbers::pi, 0.25) * std::exp(-5.0 * d * d);
}

inline WaveField sample_gaussian(const SimulationGrid& grid) {
    return sample_field(grid, [](double x) { return gaussian_initial(x); });
}

struct Norms {
    double l2 = 0.0;
    double linf = 0.0;
};

/// l2 = sqrt(dx * sum |f|^2) with dx = 2pi/(L R); linf = max |f|.
inline Norms discrete_norms(std::span<const cplx> values, double dx) {
    Norms n;
    double sum = 0.0;
    for (const auto& v : values) {
        const double a = std::abs(v);
        sum += a * a;
        if (a > n.linf) n.linf = a;
    }
    n.l2 = std::sqrt(dx * sum);
    return n;
}

template <class Tag>
Norms discrete_norms(const GridField<Tag>& f) {
    return discrete_norms(f.values(), f.grid().dx());
}

template <class Tag>
Norms discrete_norms(const GridField<Tag>& a, const GridField<Tag>& b) {
    a.require_same_grid(b);
    return discrete_norms(a - b);
}

/// Discrete mass sum |psi|^2 dx.
inline double discrete_mass(const WaveField& f) {
    const double l2 = discrete_norms(f).l2;
    return l2 * l2;
}

/// Samples of a field on a grid whose resolution divides this one's (same L):
/// keeps every (R_fine/R_coarse)-th point of each cell.
inline WaveField restrict_to(const WaveField& fine, const SimulationGrid& coarse) {
    const auto& g = fine.grid();
    if (g.cells() != coarse.cells() || g.resolution() % coarse.resolution() != 0)
        fail(ErrorCode::ShapeMismatch, "coarse grid is not a sub-grid of the fine grid");
    const std::size_t stride = g.resolution() / coarse.resolution();
    WaveField out(coarse);
    for (std::size_t l = 0; l < coarse.cells(); ++l)
        for (std::size_t r = 0; r < coarse.resolution(); ++r) out(l, r) = fine(l, r * stride);
    return out;
}

}  // namespace blochdec
