#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "blochdec/grid.hpp"

namespace blochdec {

namespace io {

/// Little-endian byte sink.
class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    const std::vector<char>& bytes() const noexcept { return bytes_; }
    std::vector<char>& bytes() noexcept { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) fail(ErrorCode::IoFailure, "unexpected end of binary data");
    }
    std::span<const char> bytes_;
    std::size_t pos_ = 0;
};

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span<const char>(text.data(), text.size()));
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::span<const char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Shortest-stable scientific formatting used by every text output.
inline std::string sci(double v, int digits = 17) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
    return buf;
}

}  // namespace io

/// CSV with header `l,r,x,re,im`; l and r are 1-based.
inline std::string wave_field_csv(const WaveField& f) {
    std::ostringstream os;
    os << "l,r,x,re,im\n";
    const auto& g = f.grid();
    for (std::size_t l = 0; l < g.cells(); ++l)
        for (std::size_t r = 0; r < g.resolution(); ++r) {
            const cplx v = f(l, r);
            os << (l + 1) << ',' << (r + 1) << ',' << io::sci(g.x(l, r)) << ',' << io::sci(v.real()) << ','
               << io::sci(v.imag()) << '\n';
        }
    return os.str();
}

/// Binary dump: "BDWF", u32 L, u32 R, then L*R (re, im) f64 pairs, row-major, little-endian.
inline std::vector<char> wave_field_binary(const WaveField& f) {
    io::ByteWriter w;
    w.raw("BDWF");
    w.u32(static_cast<std::uint32_t>(f.grid().cells()));
    w.u32(static_cast<std::uint32_t>(f.grid().resolution()));
    for (const auto& v : f.values()) {
        w.f64(v.real());
        w.f64(v.imag());
    }
    return std::move(w.bytes());
}

inline WaveField parse_wave_field_binary(std::span<const char> bytes) {
    io::ByteReader r(bytes);
    if (r.raw(4) != "BDWF") fail(ErrorCode::IoFailure, "not a wave-field dump (bad magic)");
    const std::uint32_t L = r.u32();
    const std::uint32_t R = r.u32();
    if (L == 0) fail(ErrorCode::IoFailure, "wave-field dump has zero cells");
    const auto grid = build_grid(1.0 / static_cast<double>(L), R);
    if (r.remaining() != grid.size() * 16) fail(ErrorCode::IoFailure, "wave-field dump payload has the wrong length");
    WaveField f(grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double re = r.f64();
        const double im = r.f64();
        f[j] = {re, im};
    }
    return f;
}

inline void save_wave_field(const WaveField& f, const std::filesystem::path& path) {
    if (path.extension() == ".csv")
        io::write_text(path, wave_field_csv(f));
    else
        io::write_file(path, wave_field_binary(f));
}

inline WaveField load_wave_field(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return parse_wave_field_binary(bytes);
}

}  // namespace blochdec
