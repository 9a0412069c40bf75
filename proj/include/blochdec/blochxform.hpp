#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "blochdec/band.hpp"
#include "blochdec/fft.hpp"
#include "blochdec/field_io.hpp"
#include "blochdec/grid.hpp"
#include "blochdec/parallel.hpp"

namespace blochdec {

/// Cell transform psi -> psi~: psi~_{l,r} = sum_j psi_{j,r} exp(-i k_l x_{j,1}/eps),
/// i.e. the lattice phase exp(-2 pi i k_l j). With k_l = -1/2 + l/L this is a length-L
/// DFT down each column after multiplying cell j by (-1)^j.
inline CellField cell_forward(const WaveField& psi) {
    const auto& g = psi.grid();
    const std::size_t L = g.cells(), R = g.resolution();
    std::vector<cplx> data(psi.values().begin(), psi.values().end());
    if (L > 1) {
        for (std::size_t j = 0; j < L; ++j) {
            if (j % 2 == 0) continue;
            for (std::size_t r = 0; r < R; ++r) data[j * R + r] = -data[j * R + r];
        }
        fft::transform_columns(data, L, R, fft::Direction::forward);
    }
    return CellField(g, std::move(data));
}

/// Inverse cell transform: psi_{l,r} = (1/L) sum_j psi~_{j,r} exp(2 pi i k_j l).
inline WaveField cell_inverse(const CellField& tilde) {
    const auto& g = tilde.grid();
    const std::size_t L = g.cells(), R = g.resolution();
    std::vector<cplx> data(tilde.values().begin(), tilde.values().end());
    if (L > 1) {
        fft::transform_columns(data, L, R, fft::Direction::backward);
        for (std::size_t l = 0; l < L; ++l) {
            const double mod = (l % 2 == 0 ? 1.0 : -1.0) / static_cast<double>(L);
            for (std::size_t r = 0; r < R; ++r) data[l * R + r] *= mod;
        }
    }
    return WaveField(g, std::move(data));
}

/// Bloch coefficients C_{m,l}, band-major.
class BlochCoeffs {
public:
    BlochCoeffs() = default;
    BlochCoeffs(int M, std::size_t L) : M_(M), L_(L), values_(static_cast<std::size_t>(M) * L, 0.0) {}

    int bands() const noexcept { return M_; }
    std::size_t nodes() const noexcept { return L_; }
    cplx& operator()(int m, std::size_t l) { return values_[static_cast<std::size_t>(m) * L_ + l]; }
    const cplx& operator()(int m, std::size_t l) const { return values_[static_cast<std::size_t>(m) * L_ + l]; }
    std::span<cplx> values() noexcept { return values_; }
    std::span<const cplx> values() const noexcept { return values_; }

private:
    int M_ = 0;
    std::size_t L_ = 0;
    std::vector<cplx> values_;
};

/// CSV `m,l,re,im` (1-based m and l) for debugging.
inline std::string bloch_coeffs_csv(const BlochCoeffs& c) {
    std::ostringstream os;
    os << "m,l,re,im\n";
    for (int m = 0; m < c.bands(); ++m)
        for (std::size_t l = 0; l < c.nodes(); ++l)
            os << (m + 1) << ',' << (l + 1) << ',' << io::sci(c(m, l).real()) << ',' << io::sci(c(m, l).imag()) << '\n';
    return os.str();
}

/// Band projection and reconstruction on a fixed grid.
///
/// For each node l the R lowest-frequency coefficients of every stored band
/// (lambda = -R/2..R/2-1) are laid out by DFT bin in an R x M matrix T_l, so
///   project:     C_l = (2 pi / R) T_l^H DFT_R[psi~_l exp(-i k_l y)]
///   reconstruct: psi~_l = exp(i k_l y) IDFT_R[T_l C_l] / (2 pi)
/// The 2 pi / R weight is the cell quadrature; reconstruction divides by 2 pi so the
/// round trip is the identity on fields spanned by the stored bands.
class BandProjector {
public:
    explicit BandProjector(const BandTable& table) : table_(table) {
        const auto& g = table.grid();
        const std::size_t L = g.cells(), R = g.resolution();
        if (2 * static_cast<std::size_t>(table.truncation()) <= R)
            fail(ErrorCode::TruncationMismatch, "band truncation Lambda = " + std::to_string(table.truncation()) +
                                                    " must exceed R/2 = " + std::to_string(R / 2));
        const int M = table.bands();
        const long Lambda = table.truncation();
        slices_.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            Eigen::MatrixXcd t(static_cast<Eigen::Index>(R), M);
            for (int m = 0; m < M; ++m) {
                const auto v = table.vector(m, l);
                for (std::size_t rho = 0; rho < R; ++rho)
                    t(static_cast<Eigen::Index>(rho), m) = v[static_cast<std::size_t>(fft::frequency(rho, R) + Lambda)];
            }
            slices_[l] = std::move(t);
        }
        modulation_.resize(L * R);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t r = 0; r < R; ++r) modulation_[l * R + r] = std::polar(1.0, g.k(l) * g.y(r));
    }

    const BandTable& table() const noexcept { return table_; }
    const SimulationGrid& grid() const noexcept { return table_.grid(); }

    BlochCoeffs project(const CellField& tilde) const {
        require_grid(tilde.grid());
        const std::size_t L = grid().cells(), R = grid().resolution();
        std::vector<cplx> rows(tilde.values().begin(), tilde.values().end());
        for (std::size_t j = 0; j < L * R; ++j) rows[j] *= std::conj(modulation_[j]);
        fft::transform_rows(rows, L, R, fft::Direction::forward);
        BlochCoeffs c(table_.bands(), L);
        const double weight = two_pi / static_cast<double>(R);
        parallel_for(L, [&](std::size_t l) {
            Eigen::Map<const Eigen::VectorXcd> ghat(rows.data() + l * R, static_cast<Eigen::Index>(R));
            const Eigen::VectorXcd cl = weight * (slices_[l].adjoint() * ghat);
            for (int m = 0; m < c.bands(); ++m) c(m, l) = cl(m);
        });
        return c;
    }

    CellField reconstruct(const BlochCoeffs& c) const {
        const std::size_t L = grid().cells(), R = grid().resolution();
        if (c.bands() != table_.bands() || c.nodes() != L)
            fail(ErrorCode::ShapeMismatch, "coefficient table is " + std::to_string(c.bands()) + "x" +
                                               std::to_string(c.nodes()) + ", projector expects " +
                                               std::to_string(table_.bands()) + "x" + std::to_string(L));
        std::vector<cplx> rows(L * R);
        parallel_for(L, [&](std::size_t l) {
            Eigen::VectorXcd cl(table_.bands());
            for (int m = 0; m < c.bands(); ++m) cl(m) = c(m, l);
            Eigen::Map<Eigen::VectorXcd> out(rows.data() + l * R, static_cast<Eigen::Index>(R));
            out = (slices_[l] * cl) / two_pi;
        });
        fft::transform_rows(rows, L, R, fft::Direction::backward);
        for (std::size_t j = 0; j < L * R; ++j) rows[j] *= modulation_[j];
        return CellField(grid(), std::move(rows));
    }

    /// ||P_m psi||^2 for every band from already projected coefficients, using
    /// Parseval for the row DFT and for the cell transform.
    std::vector<double> masses(const BlochCoeffs& c) const {
        const std::size_t L = grid().cells();
        std::vector<double> out(static_cast<std::size_t>(c.bands()), 0.0);
        for (int m = 0; m < c.bands(); ++m) {
            double s = 0.0;
            for (std::size_t l = 0; l < L; ++l) s += std::norm(c(m, l)) * slices_[l].col(m).squaredNorm();
            out[static_cast<std::size_t>(m)] = s / (two_pi * static_cast<double>(L * L));
        }
        return out;
    }

private:
    void require_grid(const SimulationGrid& g) const {
        if (!(g == grid())) fail(ErrorCode::ShapeMismatch, "field grid differs from the band table grid");
    }

    const BandTable& table_;
    std::vector<Eigen::MatrixXcd> slices_;
    std::vector<cplx> modulation_;
};

inline BlochCoeffs band_project(const CellField& tilde, const BandTable& bands) {
    return BandProjector(bands).project(tilde);
}

inline CellField band_reconstruct(const BlochCoeffs& coeffs, const BandTable& bands) {
    return BandProjector(bands).reconstruct(coeffs);
}

struct BandMass {
    double norm = 0.0;  // ||P_m psi||
    double mass = 0.0;  // ||P_m psi||^2
};

/// Norm of the single-band reconstruction P_m psi (zero-based m).
inline BandMass band_mass(const WaveField& psi, const BandTable& bands, int m) {
    bands.check_band(m);
    BandProjector proj(bands);
    auto c = proj.project(cell_forward(psi));
    for (int b = 0; b < c.bands(); ++b)
        if (b != m)
            for (std::size_t l = 0; l < c.nodes(); ++l) c(b, l) = 0.0;
    const double n = discrete_norms(cell_inverse(proj.reconstruct(c))).l2;
    return {n, n * n};
}

/// ||P_m psi|| and ||P_m psi||^2 for all stored bands at once.
inline std::vector<BandMass> band_masses(const WaveField& psi, const BandTable& bands) {
    BandProjector proj(bands);
    const auto sq = proj.masses(proj.project(cell_forward(psi)));
    std::vector<BandMass> out;
    out.reserve(sq.size());
    for (double s : sq) out.push_back({std::sqrt(s), s});
    return out;
}

}  // namespace blochdec
