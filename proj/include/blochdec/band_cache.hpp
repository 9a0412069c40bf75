#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "blochdec/band.hpp"
#include "blochdec/field_io.hpp"

namespace blochdec {

/// Binary band-table cache.
///
/// Layout (little-endian): "BDBT", u32 L, u32 M, u32 Lambda, f64 eps, u64 potential
/// hash, u64 FNV-1a checksum of everything after it, then M*L energies and
/// M*L*2*Lambda (re, im) coefficient pairs in (m, l, lambda) order.
class BandCacheCodec {
public:
    static std::vector<char> encode(const BandTable& t) {
        io::ByteWriter payload;
        for (double e : t.energies_) payload.f64(e);
        for (const auto& c : t.vectors_) {
            payload.f64(c.real());
            payload.f64(c.imag());
        }
        io::ByteWriter w;
        w.raw("BDBT");
        w.u32(static_cast<std::uint32_t>(t.nodes()));
        w.u32(static_cast<std::uint32_t>(t.bands()));
        w.u32(static_cast<std::uint32_t>(t.truncation()));
        w.f64(t.grid().epsilon());
        w.u64(t.potential().hash());
        w.u64(io::fnv1a(payload.bytes()));
        auto& out = w.bytes();
        out.insert(out.end(), payload.bytes().begin(), payload.bytes().end());
        return std::move(out);
    }

    /// Rebuilds a table for `grid` and `V`. Any header disagreement, checksum failure
    /// or truncated payload raises CacheMismatch.
    static BandTable decode(std::span<const char> bytes, const PeriodicPotential& V, const SimulationGrid& grid) {
        io::ByteReader r(bytes);
        std::uint32_t L = 0, M = 0, Lambda = 0;
        double eps = 0.0;
        std::uint64_t hash = 0, checksum = 0;
        try {
            if (r.raw(4) != "BDBT") fail(ErrorCode::CacheMismatch, "not a band cache (bad magic)");
            L = r.u32();
            M = r.u32();
            Lambda = r.u32();
            eps = r.f64();
            hash = r.u64();
            checksum = r.u64();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::CacheMismatch) throw;
            fail(ErrorCode::CacheMismatch, "band cache header is truncated");
        }
        if (L != grid.cells() || eps != grid.epsilon())
            fail(ErrorCode::CacheMismatch, "band cache was built for a different grid");
        if (hash != V.hash()) fail(ErrorCode::CacheMismatch, "band cache was built for a different lattice potential");
        if (M == 0 || Lambda == 0 || M > 2 * Lambda) fail(ErrorCode::CacheMismatch, "band cache header is inconsistent");
        const std::size_t dim = 2 * static_cast<std::size_t>(Lambda);
        const std::size_t count = static_cast<std::size_t>(M) * L;
        if (r.remaining() != count * 8 + count * dim * 16)
            fail(ErrorCode::CacheMismatch, "band cache payload has the wrong length");
        if (io::fnv1a(bytes.subspan(r.position())) != checksum)
            fail(ErrorCode::CacheMismatch, "band cache checksum mismatch");

        BandTable t;
        t.grid_ = grid;
        t.potential_ = V;
        t.M_ = static_cast<int>(M);
        t.lambda_ = static_cast<int>(Lambda);
        t.energies_.resize(count);
        for (auto& e : t.energies_) e = r.f64();
        t.vectors_.resize(count * dim);
        for (auto& c : t.vectors_) {
            const double re = r.f64();
            const double im = r.f64();
            c = {re, im};
        }
        // The first band above the stored ones and the gauge bookkeeping are cheap to
        // recover from the stored data plus one extra eigenvalue per node.
        t.above_.assign(L, std::numeric_limits<double>::infinity());
        if (M < dim)
            parallel_for(L, [&](std::size_t l) {
                t.above_[l] =
                    detail::hermitian_eigensolve(assemble_hk(V, grid.k(l), static_cast<int>(Lambda))).values(M);
            });
        t.link_phase_.assign(M, 0.0);
        t.isolated_.assign(M, 0);
        for (int m = 0; m < t.M_; ++m) {
            double min_gap = std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < L; ++l) min_gap = std::min(min_gap, t.gap(m, l));
            if (L < 2 || !(min_gap > band_gap_tolerance)) continue;
            t.isolated_[static_cast<std::size_t>(m)] = 1;
            const auto wrapped = detail::shift_quasi_momentum(t.vector(m, 0), 1);
            const cplx closure = detail::inner(t.vector(m, L - 1), wrapped);
            t.link_phase_[static_cast<std::size_t>(m)] = std::arg(closure);
        }
        t.gauge_tag_ = "anchor-max-real;parallel-transport;uniform-closure";
        t.build_interpolants();
        return t;
    }
};

inline void save_band_cache(const BandTable& t, const std::filesystem::path& path) {
    io::write_file(path, BandCacheCodec::encode(t));
}

inline BandTable load_band_cache(const std::filesystem::path& path, const PeriodicPotential& V,
                                 const SimulationGrid& grid) {
    const auto bytes = io::read_file(path);
    return BandCacheCodec::decode(bytes, V, grid);
}

/// CSV `k,E_1,...,E_M`, one row per node.
inline std::string bands_csv(const BandTable& t) {
    std::ostringstream os;
    os << 'k';
    for (int m = 0; m < t.bands(); ++m) os << ",E_" << (m + 1);
    os << '\n';
    for (std::size_t l = 0; l < t.nodes(); ++l) {
        os << io::sci(t.grid().k(l));
        for (int m = 0; m < t.bands(); ++m) os << ',' << io::sci(t.energy(m, l));
        os << '\n';
    }
    return os.str();
}

}  // namespace blochdec
