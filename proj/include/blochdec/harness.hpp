#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blochdec/band.hpp"
#include "blochdec/band_cache.hpp"
#include "blochdec/blochxform.hpp"
#include "blochdec/field_io.hpp"
#include "blochdec/grid.hpp"
#include "blochdec/potential.hpp"
#include "blochdec/steppers.hpp"
#include "blochdec/wkb.hpp"

namespace blochdec {

// ---------------------------------------------------------------------------
// Configuration

/// One experiment, read from a flat `key = value` file. `#` starts a comment.
///
///   scenario   name used in reports                    (default)
///   study      time | space                            (time)
///   epsilon    semiclassical parameter, 1/epsilon integral
///   R          points per cell for time studies
///   R_list     comma list of R for space studies, increasing
///   M, Lambda  stored bands and plane-wave truncation
///   lattice    free | mathieu | kronig_penney | file:<path>
///   external   none | linear:<E> | harmonic | step | file:<path>
///   schemes    comma list of bd, ts
///   order      strang | lie
///   dt         comma list of time steps, strictly decreasing
///   T          final time
///   initial    gaussian
///   reference_space_factor, reference_time_factor   BD reference policy (2, 10)
///   out        output directory
///   seed       seed for randomized checks
struct ExperimentConfig {
    std::string scenario = "default";
    std::string study = "time";
    double epsilon = 1.0 / 32.0;
    std::size_t R = 32;
    std::vector<std::size_t> R_list;
    int M = 8;
    int Lambda = 32;
    std::string lattice = "mathieu";
    std::string external = "none";
    std::vector<Scheme> schemes{Scheme::bd};
    SplitOrder order = SplitOrder::strang;
    std::vector<double> dt{0.01};
    double T = 0.1;
    std::string initial = "gaussian";
    std::size_t reference_space_factor = 2;
    std::size_t reference_time_factor = 10;
    std::string out = "out";
    std::uint64_t seed = 1;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path) {
        const auto bytes = io::read_file(path);
        return parse(std::string(bytes.begin(), bytes.end()));
    }

    void validate() const;

    /// Canonical `key=value` text, one key per line in a fixed order.
    std::string canonical() const;
    std::uint64_t hash() const {
        const auto c = canonical();
        return io::fnv1a(std::span<const char>(c.data(), c.size()));
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}

inline double parse_number(const std::string& key, const std::string& v) {
    // Accept plain fractions such as 1/32.
    const auto slash = v.find('/');
    try {
        std::size_t used = 0;
        if (slash != std::string::npos) {
            const double num = std::stod(v.substr(0, slash));
            const double den = std::stod(v.substr(slash + 1), &used);
            if (used != v.size() - slash - 1 || den == 0.0) throw std::invalid_argument(v);
            return num / den;
        }
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::logic_error&) {
        fail(ErrorCode::InvalidConfig, "key '" + key + "': '" + v + "' is not a number");
    }
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    const double x = parse_number(key, v);
    if (!(x >= 0.0) || x != std::floor(x)) fail(ErrorCode::InvalidConfig, "key '" + key + "' needs a non-negative integer");
    return static_cast<std::size_t>(x);
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "bd") return Scheme::bd;
    if (s == "ts") return Scheme::ts;
    fail(ErrorCode::InvalidConfig, "unknown scheme '" + s + "' (bd | ts)");
}

inline SplitOrder parse_order(const std::string& s) {
    if (s == "strang") return SplitOrder::strang;
    if (s == "lie") return SplitOrder::lie;
    fail(ErrorCode::InvalidConfig, "unknown splitting order '" + s + "' (strang | lie)");
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
        const auto key = detail::trim(line.substr(0, eq));
        const auto val = detail::trim(line.substr(eq + 1));
        if (key == "scenario") c.scenario = val;
        else if (key == "study") c.study = val;
        else if (key == "epsilon") c.epsilon = detail::parse_number(key, val);
        else if (key == "R") c.R = detail::parse_count(key, val);
        else if (key == "R_list") {
            c.R_list.clear();
            for (const auto& s : detail::split_list(val)) c.R_list.push_back(detail::parse_count(key, s));
        } else if (key == "M") c.M = static_cast<int>(detail::parse_count(key, val));
        else if (key == "Lambda") c.Lambda = static_cast<int>(detail::parse_count(key, val));
        else if (key == "lattice") c.lattice = val;
        else if (key == "external") c.external = val;
        else if (key == "schemes") {
            c.schemes.clear();
            for (const auto& s : detail::split_list(val)) c.schemes.push_back(detail::parse_scheme(s));
        } else if (key == "order") c.order = detail::parse_order(val);
        else if (key == "dt") {
            c.dt.clear();
            for (const auto& s : detail::split_list(val)) c.dt.push_back(detail::parse_number(key, s));
        } else if (key == "T") c.T = detail::parse_number(key, val);
        else if (key == "initial") c.initial = val;
        else if (key == "reference_space_factor") c.reference_space_factor = detail::parse_count(key, val);
        else if (key == "reference_time_factor") c.reference_time_factor = detail::parse_count(key, val);
        else if (key == "out") c.out = val;
        else if (key == "seed") c.seed = detail::parse_count(key, val);
        else fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

inline void ExperimentConfig::validate() const {
    if (study != "time" && study != "space") fail(ErrorCode::InvalidConfig, "study must be time or space");
    if (schemes.empty()) fail(ErrorCode::InvalidConfig, "no schemes selected");
    if (dt.empty()) fail(ErrorCode::InvalidConfig, "dt list is empty");
    for (std::size_t i = 0; i < dt.size(); ++i) {
        if (!(dt[i] > 0.0)) fail(ErrorCode::InvalidConfig, "time steps must be positive");
        if (i > 0 && !(dt[i] < dt[i - 1])) fail(ErrorCode::InvalidConfig, "dt list must be strictly decreasing");
    }
    if (!(T > 0.0)) fail(ErrorCode::InvalidConfig, "T must be positive");
    if (M < 1 || Lambda < 1) fail(ErrorCode::InvalidConfig, "M and Lambda must be positive");
    if (initial != "gaussian") fail(ErrorCode::InvalidConfig, "unknown initial data '" + initial + "'");
    if (study == "space") {
        if (R_list.empty()) fail(ErrorCode::InvalidConfig, "space study needs R_list");
        for (std::size_t i = 1; i < R_list.size(); ++i)
            if (!(R_list[i] > R_list[i - 1])) fail(ErrorCode::InvalidConfig, "R_list must be strictly increasing");
        for (auto r : R_list) (void)build_grid(epsilon, r);
    } else {
        (void)build_grid(epsilon, R);
    }
    (void)parse_lattice(lattice, Lambda);
    (void)parse_external(external);
}

inline std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    auto list = [](const auto& v, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
        return s;
    };
    os << "scenario=" << scenario << '\n'
       << "study=" << study << '\n'
       << "epsilon=" << io::sci(epsilon) << '\n'
       << "R=" << R << '\n'
       << "R_list=" << list(R_list, [](std::size_t r) { return std::to_string(r); }) << '\n'
       << "M=" << M << '\n'
       << "Lambda=" << Lambda << '\n'
       << "lattice=" << lattice << '\n'
       << "external=" << external << '\n'
       << "schemes=" << list(schemes, [](Scheme s) { return to_string(s); }) << '\n'
       << "order=" << to_string(order) << '\n'
       << "dt=" << list(dt, [](double d) { return io::sci(d); }) << '\n'
       << "T=" << io::sci(T) << '\n'
       << "initial=" << initial << '\n'
       << "reference_space_factor=" << reference_space_factor << '\n'
       << "reference_time_factor=" << reference_time_factor << '\n'
       << "seed=" << seed << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Error reports

/// Errors of one scheme at every refinement level.
struct SchemeErrors {
    Scheme scheme = Scheme::bd;
    std::vector<double> l2, linf;
    std::vector<double> mass_drift;
    std::vector<double> seconds_per_step;  // informational
};

struct ErrorReport {
    std::string scenario;
    std::string parameter;  // "1/R" or "dt"
    std::vector<double> h;
    std::vector<SchemeErrors> rows;
};

/// log(e_i / e_{i+1}) / log(h_i / h_{i+1}) between adjacent levels; log2 of the
/// error ratio when h halves. Empty where an error is zero or not finite.
inline std::vector<std::optional<double>> observed_orders(const std::vector<double>& h, const std::vector<double>& e) {
    std::vector<std::optional<double>> out;
    for (std::size_t i = 0; i + 1 < e.size() && i + 1 < h.size(); ++i) {
        if (e[i] > 0.0 && e[i + 1] > 0.0 && std::isfinite(e[i]) && std::isfinite(e[i + 1]) && h[i] != h[i + 1])
            out.emplace_back(std::log(e[i] / e[i + 1]) / std::log(h[i] / h[i + 1]));
        else
            out.emplace_back(std::nullopt);
    }
    return out;
}

/// Least-squares slope of log e against log h.
inline double fitted_order(const std::vector<double>& h, const std::vector<double>& e) {
    const std::size_t n = std::min(h.size(), e.size());
    if (n < 2) fail(ErrorCode::InvalidConfig, "order fit needs two levels");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(h[i]), y = std::log(e[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nn = static_cast<double>(n);
    return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

/// Norms of a - b.
inline Norms compare_solutions(const WaveField& a, const WaveField& b) {
    if (!(a.grid() == b.grid())) fail(ErrorCode::ShapeMismatch, "solutions live on different grids");
    return discrete_norms(a, b);
}

// ---------------------------------------------------------------------------
// Convergence studies

namespace detail {

/// Bands and truncation used at resolution R: at most R bands and Lambda > R/2.
inline std::pair<int, int> level_bands(int M, int Lambda, std::size_t R) {
    return {std::min<int>(M, static_cast<int>(R)), std::max<int>(Lambda, static_cast<int>(R / 2 + 1))};
}

inline std::size_t step_count(double T, double dt) {
    const double n = T / dt;
    const auto N = static_cast<std::size_t>(std::llround(n));
    if (N < 1 || std::abs(n - static_cast<double>(N)) > 1e-9 * n)
        fail(ErrorCode::InvalidConfig, "T = " + io::sci(T, 6) + " is not a multiple of dt = " + io::sci(dt, 6));
    return N;
}

struct Run {
    WaveField psi;
    double drift = 0.0;
    double seconds_per_step = 0.0;
};

inline Run run_scheme(const ExperimentConfig& c, Scheme scheme, std::size_t R, double dt) {
    const auto grid = build_grid(c.epsilon, R);
    const auto [M, Lambda] = level_bands(c.M, c.Lambda, R);
    const auto V = parse_lattice(c.lattice, Lambda);
    StepperConfig sc;
    sc.scheme = scheme;
    sc.order = c.order;
    sc.external = parse_external(c.external);
    std::optional<BandTable> table;
    if (scheme == Scheme::bd) {
        table.emplace(solve_bands(V, grid, Lambda, M));
        sc.bands = &*table;
    } else {
        sc.lattice = V;
    }
    const std::size_t N = step_count(c.T, dt);
    const auto t0 = std::chrono::steady_clock::now();
    auto tr = evolve(sample_gaussian(grid), sc, c.T, N);
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - t0;
    return {std::move(tr.final), tr.mass_drift(), el.count() / static_cast<double>(N)};
}

}  // namespace detail

/// Evolves every configured scheme at every refinement level and compares with a
/// BD reference at reference_space_factor x the finest R and dt / reference_time_factor.
inline ErrorReport run_convergence_study(const ExperimentConfig& c) {
    c.validate();
    const bool space = c.study == "space";
    const std::vector<std::size_t> levels_R = space ? c.R_list : std::vector<std::size_t>{c.R};
    const std::size_t finest_R = levels_R.back();
    const double finest_dt = c.dt.back();
    const std::size_t ref_R = c.reference_space_factor * finest_R;
    if (c.reference_space_factor < 2 || c.reference_time_factor < 1 || (!space && c.reference_time_factor < 2))
        fail(ErrorCode::ReferenceTooCoarse, "reference grid must be finer than the finest test grid");
    const double ref_dt = finest_dt / static_cast<double>(c.reference_time_factor);
    const auto reference = detail::run_scheme(c, Scheme::bd, ref_R, ref_dt).psi;

    ErrorReport rep;
    rep.scenario = c.scenario;
    rep.parameter = space ? "1/R" : "dt";
    if (space)
        for (auto r : levels_R) rep.h.push_back(1.0 / static_cast<double>(r));
    else
        rep.h = c.dt;
    for (Scheme s : c.schemes) {
        SchemeErrors row;
        row.scheme = s;
        const std::size_t n = space ? levels_R.size() : c.dt.size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t R = space ? levels_R[i] : c.R;
            const double dt = space ? c.dt.front() : c.dt[i];
            const auto run = detail::run_scheme(c, s, R, dt);
            const auto e = compare_solutions(run.psi, restrict_to(reference, run.psi.grid()));
            row.l2.push_back(e.l2);
            row.linf.push_back(e.linf);
            row.mass_drift.push_back(run.drift);
            row.seconds_per_step.push_back(run.seconds_per_step);
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Report emission

enum class ReportFormat { csv, markdown, svg };

namespace detail {

/// Six significant digits.
inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.5e", v);
    return buf;
}

inline std::string fmt_order(const std::optional<double>& o) {
    if (!o) return {};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *o);
    return buf;
}

/// Label plus cells for every row of the Table-shaped layout.
inline std::vector<std::vector<std::string>> report_rows(const ErrorReport& r) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{r.parameter};
    for (double h : r.h) head.push_back(fmt6(h));
    rows.push_back(head);
    for (const auto& s : r.rows) {
        const auto name = to_string(s.scheme);
        auto values = [&](const std::string& label, const std::vector<double>& v) {
            std::vector<std::string> row{name + "_" + label};
            for (double x : v) row.push_back(fmt6(x));
            rows.push_back(row);
        };
        auto orders = [&](const std::string& label, const std::vector<double>& e) {
            std::vector<std::string> row{name + "_" + label + "_order", ""};
            for (const auto& o : observed_orders(r.h, e)) row.push_back(fmt_order(o));
            rows.push_back(row);
        };
        values("l2", s.l2);
        orders("l2", s.l2);
        values("linf", s.linf);
        orders("linf", s.linf);
        values("mass_drift", s.mass_drift);
    }
    return rows;
}

inline std::string svg_plot(const ErrorReport& r) {
    const double W = 640, H = 480, left = 80, right = 20, top = 30, bottom = 60;
    double hmin = INFINITY, hmax = 0, emin = INFINITY, emax = 0;
    for (double h : r.h) {
        hmin = std::min(hmin, h);
        hmax = std::max(hmax, h);
    }
    for (const auto& s : r.rows)
        for (double e : s.l2)
            if (e > 0) {
                emin = std::min(emin, e);
                emax = std::max(emax, e);
            }
    if (!(emax > 0)) emin = 1e-16, emax = 1.0;
    const double x0 = std::floor(std::log10(hmin)), x1 = std::max(x0 + 1, std::ceil(std::log10(hmax)));
    const double y0 = std::floor(std::log10(emin)), y1 = std::max(y0 + 1, std::ceil(std::log10(emax)));
    auto px = [&](double h) { return left + (std::log10(h) - x0) / (x1 - x0) * (W - left - right); };
    auto py = [&](double e) { return H - bottom - (std::log10(e) - y0) / (y1 - y0) * (H - top - bottom); };
    auto f2 = [](double v) {
        char b[32];
        std::snprintf(b, sizeof b, "%.2f", v);
        return std::string(b);
    };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" font-family=\"sans-serif\" "
          "font-size=\"12\">\n";
    os << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    os << "<text x=\"320\" y=\"18\" text-anchor=\"middle\">" << r.scenario << ": l2 error vs " << r.parameter
       << "</text>\n";
    for (double d = x0; d <= x1 + 1e-9; d += 1) {
        const double x = px(std::pow(10.0, d));
        os << "<line x1=\"" << f2(x) << "\" y1=\"" << f2(top) << "\" x2=\"" << f2(x) << "\" y2=\"" << f2(H - bottom)
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << f2(x) << "\" y=\"" << f2(H - bottom + 18) << "\" text-anchor=\"middle\">1e" << d
           << "</text>\n";
    }
    for (double d = y0; d <= y1 + 1e-9; d += 1) {
        const double y = py(std::pow(10.0, d));
        os << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(y) << "\" x2=\"" << f2(W - right) << "\" y2=\"" << f2(y)
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << f2(left - 6) << "\" y=\"" << f2(y + 4) << "\" text-anchor=\"end\">1e" << d << "</text>\n";
    }
    os << "<text x=\"320\" y=\"" << f2(H - 15) << "\" text-anchor=\"middle\">" << r.parameter << "</text>\n";
    const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& s = r.rows[i];
        const char* col = colours[i % 4];
        std::string pts;
        for (std::size_t j = 0; j < s.l2.size() && j < r.h.size(); ++j)
            if (s.l2[j] > 0) pts += (pts.empty() ? "" : " ") + f2(px(r.h[j])) + "," + f2(py(s.l2[j]));
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
        os << "<text x=\"" << f2(W - right - 60) << "\" y=\"" << f2(top + 16 * (static_cast<double>(i) + 1))
           << "\" fill=\"" << col << "\">" << to_string(s.scheme) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace detail

/// Deterministic text for one format. Timing is left out; see timing_csv.
inline std::string render_report(const ErrorReport& r, ReportFormat format) {
    if (r.h.empty() || r.rows.empty()) fail(ErrorCode::InvalidConfig, "empty report");
    const auto rows = detail::report_rows(r);
    std::ostringstream os;
    switch (format) {
        case ReportFormat::csv:
            for (const auto& row : rows) {
                for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
                for (std::size_t i = row.size(); i < rows.front().size(); ++i) os << ',';
                os << '\n';
            }
            break;
        case ReportFormat::markdown: {
            const std::size_t cols = rows.front().size();
            for (std::size_t k = 0; k < rows.size(); ++k) {
                os << '|';
                for (std::size_t i = 0; i < cols; ++i) os << ' ' << (i < rows[k].size() ? rows[k][i] : "") << " |";
                os << '\n';
                if (k == 0) {
                    os << '|';
                    for (std::size_t i = 0; i < cols; ++i) os << "---|";
                    os << '\n';
                }
            }
            break;
        }
        case ReportFormat::svg: os << detail::svg_plot(r); break;
    }
    return os.str();
}

/// Wall-clock per step; kept apart so report.csv stays byte-reproducible.
inline std::string timing_csv(const ErrorReport& r) {
    std::ostringstream os;
    os << "scheme," << r.parameter << ",seconds_per_step\n";
    for (const auto& s : r.rows)
        for (std::size_t i = 0; i < s.seconds_per_step.size() && i < r.h.size(); ++i)
            os << to_string(s.scheme) << ',' << detail::fmt6(r.h[i]) << ',' << detail::fmt6(s.seconds_per_step[i])
               << '\n';
    return os.str();
}

/// Writes report.{csv,md,svg} for the requested format (csv also writes timing.csv).
/// Returns the file names written, relative to `dir`.
inline std::vector<std::string> emit_report(const ErrorReport& r, ReportFormat format, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::string> written;
    switch (format) {
        case ReportFormat::csv:
            io::write_text(dir / "report.csv", render_report(r, format));
            io::write_text(dir / "timing.csv", timing_csv(r));
            written = {"report.csv", "timing.csv"};
            break;
        case ReportFormat::markdown:
            io::write_text(dir / "report.md", render_report(r, format));
            written = {"report.md"};
            break;
        case ReportFormat::svg:
            io::write_text(dir / "report.svg", render_report(r, format));
            written = {"report.svg"};
            break;
    }
    return written;
}

inline std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// manifest.json listing every output file (size and FNV-1a) and the config hash.
inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const std::string& config_text, std::vector<std::string> files) {
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    nlohmann::ordered_json j;
    j["tool"] = "blochdec";
    j["command"] = command;
    j["config_hash"] = hex64(io::fnv1a(std::span<const char>(config_text.data(), config_text.size())));
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : files) {
        const auto bytes = io::read_file(dir / f);
        j["files"].push_back({{"name", f}, {"bytes", bytes.size()}, {"fnv1a", hex64(io::fnv1a(bytes))}});
    }
    io::write_text(dir / "manifest.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Self-test

struct SelftestCheck {
    std::string module;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelftestResult {
    std::uint64_t seed = 0;
    std::vector<SelftestCheck> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
    const SelftestCheck* first_failure() const {
        for (const auto& c : checks)
            if (!c.passed) return &c;
        return nullptr;
    }
};

/// Invariant suites of every module at small sizes (L <= 8, R <= 16, Lambda <= 16).
inline SelftestResult selftest(std::uint64_t seed = 1) {
    SelftestResult res;
    res.seed = seed;
    auto check = [&](const std::string& module, const std::string& name, auto&& body) {
        SelftestCheck c{module, name, false, {}};
        try {
            std::tie(c.passed, c.detail) = body();
        } catch (const std::exception& e) {
            c.detail = std::string("threw ") + e.what();
        }
        c.detail += " (seed " + std::to_string(seed) + ")";
        res.checks.push_back(std::move(c));
    };
    auto within = [](double v, double tol) {
        return std::pair<bool, std::string>{v <= tol, "value " + io::sci(v, 3) + ", tolerance " + io::sci(tol, 3)};
    };

    const auto grid = build_grid(1.0 / 8.0, 16);
    const int Lambda = 16;
    const auto V = mathieu(Lambda);
    const auto table = solve_bands(V, grid, Lambda, 8);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    WaveField rnd(grid);
    for (auto& v : rnd.values()) v = {gauss(rng), gauss(rng)};

    check("grid-core", "index maps", [&] {
        double d = 0;
        for (std::size_t l = 0; l < grid.cells(); ++l)
            for (std::size_t r = 0; r < grid.resolution(); ++r)
                d = std::max(d, std::abs(grid.x(l, r) - grid.x_flat(l * grid.resolution() + r)) +
                                    std::abs(grid.x(l, r) - grid.epsilon() * (two_pi * static_cast<double>(l) + grid.y(r))));
        return within(d, 1e-13);
    });
    check("grid-core", "constant field norms", [&] {
        WaveField c(grid);
        for (auto& v : c.values()) v = 0.5;
        const auto n = discrete_norms(c);
        return within(std::abs(n.l2 - 0.5 * std::sqrt(two_pi)) + std::abs(n.linf - 0.5), 1e-13);
    });
    check("potential", "Mathieu coefficients", [&] {
        double d = std::abs(V.coefficient(1) - 0.5) + std::abs(V.coefficient(-1) - 0.5) + std::abs(V.coefficient(0));
        for (long l = 2; l <= V.max_index(); ++l) d += std::abs(V.coefficient(l)) + std::abs(V.coefficient(-l));
        return within(d, 1e-15);
    });
    check("potential", "Hermitian block", [&] {
        const auto h = assemble_hk(kronig_penney(Lambda), 0.3, Lambda);
        return within(h.hermiticity_defect(), 1e-15);
    });
    check("band", "free dispersion", [&] {
        const auto free = solve_bands(free_lattice(Lambda), grid, Lambda, 4);
        double d = 0;
        for (std::size_t l = 0; l < grid.cells(); ++l) {
            std::vector<double> e;
            for (long lam = -Lambda; lam < Lambda; ++lam) e.push_back(0.5 * std::pow(grid.k(l) + lam, 2));
            std::sort(e.begin(), e.end());
            for (int m = 0; m < 4; ++m) d = std::max(d, std::abs(free.energy(m, l) - e[static_cast<std::size_t>(m)]));
        }
        return within(d, 1e-12);
    });
    check("band", "eigen residual and orthonormality", [&] {
        double d = 0;
        for (std::size_t l = 0; l < grid.cells(); ++l) {
            const auto h = assemble_hk(V, grid.k(l), Lambda).dense();
            for (int m = 0; m < table.bands(); ++m) {
                const auto v = table.vector(m, l);
                Eigen::Map<const Eigen::VectorXcd> vm(v.data(), static_cast<Eigen::Index>(v.size()));
                d = std::max(d, (h * vm - table.energy(m, l) * vm).norm());
                for (int n = 0; n < table.bands(); ++n) {
                    const auto w = table.vector(n, l);
                    d = std::max(d, std::abs(detail::inner(w, v) - (m == n ? 1.0 : 0.0)));
                }
            }
        }
        return within(d, 1e-12);
    });
    check("band", "cache round trip", [&] {
        const auto bytes = BandCacheCodec::encode(table);
        const auto back = BandCacheCodec::decode(bytes, V, grid);
        double d = 0;
        for (int m = 0; m < table.bands(); ++m)
            for (std::size_t l = 0; l < grid.cells(); ++l) d = std::max(d, std::abs(back.energy(m, l) - table.energy(m, l)));
        return within(d, 0.0);
    });
    check("band", "flipped cache byte detected", [&] {
        auto bytes = BandCacheCodec::encode(table);
        std::uniform_int_distribution<std::size_t> pos(40, bytes.size() - 1);
        bytes[pos(rng)] ^= 0x10;
        try {
            (void)BandCacheCodec::decode(bytes, V, grid);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::CacheMismatch) return std::pair<bool, std::string>{true, "CacheMismatch raised"};
            throw;
        }
        return std::pair<bool, std::string>{false, "corrupted cache accepted"};
    });
    check("blochxform", "cell transform unitarity", [&] {
        const auto t = cell_forward(rnd);
        const double ratio = discrete_mass(cell_inverse(t)) / discrete_mass(rnd);
        const double parseval = discrete_norms(t).l2 / (std::sqrt(static_cast<double>(grid.cells())) * discrete_norms(rnd).l2);
        return within(std::abs(ratio - 1.0) + std::abs(parseval - 1.0) + discrete_norms(cell_inverse(t), rnd).linf, 1e-12);
    });
    check("blochxform", "projection idempotency", [&] {
        BandProjector P(table);
        const auto once = cell_inverse(P.reconstruct(P.project(cell_forward(rnd))));
        const auto twice = cell_inverse(P.reconstruct(P.project(cell_forward(once))));
        return within(discrete_norms(once, twice).linf / std::max(discrete_norms(once).linf, 1e-300), 1e-10);
    });
    check("steppers", "BD mass conservation", [&] {
        StepperConfig sc;
        sc.bands = &table;
        sc.external = ExternalPotential::harmonic();
        auto tr = evolve(sample_gaussian(grid), sc, 0.1, 10);
        double d = 0;
        for (std::size_t i = 2; i < tr.mass.size(); ++i) d = std::max(d, std::abs(tr.mass[i] - tr.mass[1]));
        // At R = 16 the eighth band still has coefficients beyond |lambda| = R/2.
        return within(d, 1e-8);
    });
    check("steppers", "gauge randomization leaves BD unchanged", [&] {
        StepperConfig sc;
        sc.bands = &table;
        sc.external = ExternalPotential::harmonic();
        const auto base = evolve(sample_gaussian(grid), sc, 0.1, 5).final;
        const auto other = table.rephased(seed);
        sc.bands = &other;
        return within(discrete_norms(evolve(sample_gaussian(grid), sc, 0.1, 5).final, base).linf, 1e-12);
    });
    check("steppers", "one step exact without external field", [&] {
        StepperConfig sc;
        sc.bands = &table;
        const auto a = evolve(sample_gaussian(grid), sc, 0.1, 1).final;
        const auto b = evolve(sample_gaussian(grid), sc, 0.1, 8).final;
        return within(discrete_norms(a, b).l2, 1e-10);
    });
    check("wkb", "constant phase solves HJ exactly", [&] {
        const auto tr = hj_solve(table, 0, ExternalPotential::none(), InitialPhase::zero(), 0.2, 32, 1e-2);
        double d = 0;
        const double e0 = eval_band(table, 0, 0.0);
        for (std::size_t i = 0; i < tr.times.size(); ++i)
            for (double v : tr.phi[i]) d = std::max(d, std::abs(v + e0 * tr.times[i]));
        return within(d, 1e-8);
    });
    check("cli-harness", "observed order of a synthetic sequence", [&] {
        std::uniform_real_distribution<double> p(0.5, 8.0);
        const double order = p(rng);
        std::vector<double> h{0.1, 0.05, 0.025, 0.0125}, e;
        for (double x : h) e.push_back(3.0 * std::pow(x, order));
        double d = 0;
        for (const auto& o : observed_orders(h, e)) d = std::max(d, o ? std::abs(*o - order) : 1.0);
        return within(d, 1e-10);
    });
    return res;
}

}  // namespace blochdec
