// blochdec command line: bands | evolve | compare | wkb | convergence | selftest.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "blochdec/blochdec.hpp"

namespace fs = std::filesystem;
using namespace blochdec;

namespace {

struct Common {
    double eps = 1.0 / 32.0;
    std::size_t R = 32;
    int M = 32;
    int Lambda = 32;
    std::string lattice = "mathieu";
    std::string external = "none";
    std::string out = "out";
};

void add_common(CLI::App* app, Common& c, bool with_external = true) {
    app->add_option("--eps", c.eps, "semiclassical parameter (1/eps must be an integer)")->capture_default_str();
    app->add_option("--R", c.R, "grid points per cell")->capture_default_str();
    app->add_option("--M", c.M, "number of bands")->capture_default_str();
    app->add_option("--Lambda", c.Lambda, "plane-wave truncation")->capture_default_str();
    app->add_option("--lattice", c.lattice, "free | mathieu | kronig_penney | file:<path>")->capture_default_str();
    if (with_external)
        app->add_option("--external", c.external, "none | linear:<E> | harmonic | step | file:<path>")
            ->capture_default_str();
    app->add_option("--out", c.out, "output directory")->capture_default_str();
}

/// Records the command line in canonical form; its hash goes into manifest.json.
std::string describe(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << "command=" << cmd << '\n';
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    return os.str();
}

fs::path prepare(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
    return dir;
}

std::string num(double v) { return io::sci(v); }

int run_bands(const Common& c, bool write_cache) {
    const auto out = prepare(c.out);
    const auto grid = build_grid(c.eps, c.R);
    const auto V = parse_lattice(c.lattice, c.Lambda);
    const auto table = solve_bands(V, grid, c.Lambda, c.M);
    std::vector<std::string> files{"bands.csv"};
    io::write_text(out / "bands.csv", bands_csv(table));
    if (write_cache) {
        save_band_cache(table, out / "bands.bdbt");
        files.push_back("bands.bdbt");
    }
    write_manifest(out, "bands",
                   describe("bands", {{"eps", num(c.eps)},
                                      {"R", std::to_string(c.R)},
                                      {"M", std::to_string(c.M)},
                                      {"Lambda", std::to_string(c.Lambda)},
                                      {"lattice", c.lattice}}),
                   files);
    std::cout << "bands: " << c.M << " bands on " << grid.cells() << " k-nodes -> " << out.string() << '\n';
    return 0;
}

int run_evolve(const Common& c, const std::string& scheme, const std::string& order, double T, std::size_t steps,
               std::size_t snapshot_every, bool band_masses, const std::string& cache) {
    const auto out = prepare(c.out);
    const auto grid = build_grid(c.eps, c.R);
    const auto V = parse_lattice(c.lattice, c.Lambda);
    StepperConfig sc;
    sc.scheme = detail::parse_scheme(scheme);
    sc.order = detail::parse_order(order);
    sc.external = parse_external(c.external);
    std::optional<BandTable> table;
    if (sc.scheme == Scheme::bd) {
        if (!cache.empty() && fs::exists(cache)) {
            table.emplace(load_band_cache(cache, V, grid));
        } else {
            table.emplace(solve_bands(V, grid, c.Lambda, c.M));
            if (!cache.empty()) save_band_cache(*table, cache);
        }
        sc.bands = &*table;
    } else {
        sc.lattice = V;
    }
    EvolveOptions opts;
    opts.band_masses = band_masses && sc.scheme == Scheme::bd;
    opts.snapshot_every = snapshot_every;
    const auto t0 = std::chrono::steady_clock::now();
    const auto tr = evolve(sample_gaussian(grid), sc, T, steps, opts);
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - t0;

    std::vector<std::string> files;
    std::ostringstream mass;
    mass << "t,mass";
    if (opts.band_masses)
        for (int m = 0; m < table->bands(); ++m) mass << ",M_" << (m + 1);
    mass << '\n';
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        mass << num(tr.times[i]) << ',' << num(tr.mass[i]);
        if (opts.band_masses)
            for (double b : tr.band_mass[i]) mass << ',' << num(b);
        mass << '\n';
    }
    io::write_text(out / "mass.csv", mass.str());
    files.push_back("mass.csv");
    for (const auto& [n, psi] : tr.snapshots) {
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%06zu", n);
        io::write_text(out / (std::string(name) + ".csv"), wave_field_csv(psi));
        save_wave_field(psi, out / (std::string(name) + ".bdwf"));
        files.push_back(std::string(name) + ".csv");
        files.push_back(std::string(name) + ".bdwf");
    }
    io::write_text(out / "final.csv", wave_field_csv(tr.final));
    save_wave_field(tr.final, out / "final.bdwf");
    files.push_back("final.csv");
    files.push_back("final.bdwf");
    write_manifest(out, "evolve",
                   describe("evolve", {{"scheme", scheme},
                                       {"order", order},
                                       {"eps", num(c.eps)},
                                       {"R", std::to_string(c.R)},
                                       {"M", std::to_string(c.M)},
                                       {"Lambda", std::to_string(c.Lambda)},
                                       {"lattice", c.lattice},
                                       {"external", c.external},
                                       {"T", num(T)},
                                       {"steps", std::to_string(steps)},
                                       {"snapshot_every", std::to_string(snapshot_every)}}),
                   files);
    std::cout << "evolve: " << steps << " " << scheme << " steps in " << el.count() << " s, mass drift "
              << tr.mass_drift() << " -> " << out.string() << '\n';
    return 0;
}

int run_compare(const std::string& a, const std::string& b, const std::string& out_dir) {
    const auto fa = load_wave_field(a);
    const auto fb = load_wave_field(b);
    const auto n = compare_solutions(fa, fb);
    std::cout << "l2 " << io::sci(n.l2, 6) << "  linf " << io::sci(n.linf, 6) << '\n';
    if (!out_dir.empty()) {
        const auto out = prepare(out_dir);
        io::write_text(out / "compare.csv", "l2,linf\n" + num(n.l2) + "," + num(n.linf) + "\n");
        write_manifest(out, "compare", describe("compare", {{"a", a}, {"b", b}}), {"compare.csv"});
    }
    return 0;
}

struct WkbArgs {
    int band = 1;
    std::string phi0 = "zero";
    std::string f0 = "gaussian";
    double t_end = 1.0;
    std::size_t nx = 1024;
    double hj_dt = 0.0;
    bool compare = false;
    std::size_t samples = 10;
    std::size_t bd_steps = 1000;
};

int run_wkb(Common c, const WkbArgs& w) {
    if (w.f0 != "gaussian") fail(ErrorCode::InvalidConfig, "only --f0 gaussian is available");
    const auto out = prepare(c.out);
    const int m = w.band - 1;
    const auto V = parse_lattice(c.lattice, c.Lambda);
    const auto U = parse_external(c.external);
    const auto phi0 = InitialPhase::parse(w.phi0);
    // Band data for the slow variables on a fixed fine k-grid.
    const auto wkb_table = solve_bands(V, build_grid(1.0 / 64.0, 4), c.Lambda, std::max(w.band + 1, 4));
    HjOptions ho;
    ho.watch = amplitude_window(wkb_gaussian);
    const double dt = w.hj_dt > 0.0 ? w.hj_dt : hj_stable_dt(wkb_table, m, w.nx);
    const auto phase = hj_solve(wkb_table, m, U, phi0, w.t_end, w.nx, dt, ho);
    std::vector<std::string> files;

    std::ostringstream caustic;
    caustic << "t,max_compressive_phi_xx\n";
    for (std::size_t i = 0; i < phase.caustic.times.size(); ++i)
        caustic << num(phase.caustic.times[i]) << ',' << num(phase.caustic.history[i]) << '\n';
    io::write_text(out / "caustic.csv", caustic.str());
    files.push_back("caustic.csv");
    {
        std::ostringstream os;
        os << "x,p,phi\n";
        for (std::size_t j = 0; j < phase.grid.n; ++j)
            os << num(phase.grid.x(j)) << ',' << num(phase.p.back()[j]) << ',' << num(phase.phi.back()[j]) << '\n';
        io::write_text(out / "phase_final.csv", os.str());
        files.push_back("phase_final.csv");
    }
    if (phase.caustic.detected)
        std::cout << "wkb: caustic detected at t_c = " << phase.caustic.t_c << "; integration stopped\n";
    else
        std::cout << "wkb: no caustic up to t = " << phase.times.back() << '\n';

    const auto f = [](double x) { return cplx(wkb_gaussian(x)); };
    const auto amp = transport_solve(wkb_table, m, U, phase, f);
    {
        std::ostringstream os;
        os << "t,amplitude_mass\n";
        for (std::size_t i = 0; i < amp.times.size(); ++i) os << num(amp.times[i]) << ',' << num(amp.mass(i)) << '\n';
        io::write_text(out / "amplitude_mass.csv", os.str());
        files.push_back("amplitude_mass.csv");
    }

    if (w.compare) {
        const auto grid = build_grid(c.eps, c.R);
        BlochVectorCache cache(wkb_table, m);
        const auto psi0 = build_wkb_initial(cache, f, phi0, grid);
        const auto table = solve_bands(V, grid, c.Lambda, c.M);
        StepperConfig sc;
        sc.bands = &table;
        sc.external = U;
        const double t_stop = phase.times.back();
        EvolveOptions eo;
        eo.snapshot_every = std::max<std::size_t>(1, w.bd_steps / w.samples);
        const auto tr = evolve(psi0, sc, w.t_end, w.bd_steps, eo);
        std::ostringstream os;
        os << "t,l2,linf\n";
        double sup2 = 0.0, supi = 0.0;
        for (const auto& [n, psi] : tr.snapshots) {
            const double t = w.t_end * static_cast<double>(n) / static_cast<double>(w.bd_steps);
            if (t > t_stop + 1e-12) break;
            const auto level = static_cast<std::size_t>(std::llround(t / dt));
            if (level >= phase.times.size() || std::abs(phase.times[level] - t) > 1e-9) continue;
            const auto e = compare_solutions(psi, reconstruct_sc(phase, amp, level, cache, grid));
            sup2 = std::max(sup2, e.l2);
            supi = std::max(supi, e.linf);
            os << num(t) << ',' << num(e.l2) << ',' << num(e.linf) << '\n';
        }
        io::write_text(out / "wkb_compare.csv", os.str());
        files.push_back("wkb_compare.csv");
        std::cout << "wkb: sup l2 " << io::sci(sup2, 6) << "  sup linf " << io::sci(supi, 6) << '\n';
    }
    write_manifest(out, "wkb",
                   describe("wkb", {{"band", std::to_string(w.band)},
                                    {"phi0", w.phi0},
                                    {"f0", w.f0},
                                    {"eps", num(c.eps)},
                                    {"R", std::to_string(c.R)},
                                    {"M", std::to_string(c.M)},
                                    {"Lambda", std::to_string(c.Lambda)},
                                    {"lattice", c.lattice},
                                    {"external", c.external},
                                    {"t_end", num(w.t_end)},
                                    {"nx", std::to_string(w.nx)},
                                    {"compare", w.compare ? "1" : "0"}}),
                   files);
    return 0;
}

int run_convergence(const std::string& config_path, const std::string& format, const std::string& out_override) {
    auto cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out = out_override;
    const auto report = run_convergence_study(cfg);
    std::vector<std::string> files;
    auto emit = [&](ReportFormat f) {
        for (auto& name : emit_report(report, f, cfg.out)) files.push_back(name);
    };
    if (format == "csv" || format == "all") emit(ReportFormat::csv);
    if (format == "markdown" || format == "all") emit(ReportFormat::markdown);
    if (format == "svg" || format == "all") emit(ReportFormat::svg);
    if (files.empty()) fail(ErrorCode::InvalidConfig, "unknown format '" + format + "'");
    write_manifest(cfg.out, "convergence", cfg.canonical(), files);
    std::cout << render_report(report, ReportFormat::markdown);
    return 0;
}

int run_selftest(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = selftest(seed);
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - t0;
    for (const auto& c : res.checks)
        std::cout << (c.passed ? "ok   " : "FAIL ") << c.module << ": " << c.name << "  [" << c.detail << "]\n";
    if (const auto* f = res.first_failure()) {
        std::cout << "selftest FAILED at " << f->module << " / " << f->name << " (seed " << seed << ")\n";
        return 1;
    }
    std::cout << "selftest passed: " << res.checks.size() << " checks in " << el.count() << " s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bloch-decomposition and time-splitting solvers for Schroedinger equations with lattice potentials"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (default: BLOCHDEC_THREADS or hardware)");

    Common bands_c;
    bool write_cache = true;
    auto* bands = app.add_subcommand("bands", "solve the band structure; writes bands.csv and a band cache");
    add_common(bands, bands_c, false);
    bands->add_flag("!--no-cache", write_cache, "skip the binary band cache");

    Common ev_c;
    std::string scheme = "bd", order = "strang", cache;
    double T = 1.0;
    std::size_t steps = 100, snapshot_every = 0;
    bool band_masses = false;
    auto* evolve_cmd = app.add_subcommand("evolve", "evolve the Gaussian initial datum with BD or TS");
    add_common(evolve_cmd, ev_c);
    evolve_cmd->add_option("--scheme", scheme, "bd | ts")->capture_default_str();
    evolve_cmd->add_option("--order", order, "lie | strang")->capture_default_str();
    evolve_cmd->add_option("--T", T, "final time")->capture_default_str();
    evolve_cmd->add_option("--steps", steps, "number of time steps")->capture_default_str();
    evolve_cmd->add_option("--snapshot-every", snapshot_every, "write a snapshot every n steps (0: none)");
    evolve_cmd->add_flag("--band-masses", band_masses, "record ||P_m psi||^2 after every step (BD)");
    evolve_cmd->add_option("--band-cache", cache, "band cache file to read, or to create when missing");

    std::string fa, fb, cmp_out;
    auto* compare = app.add_subcommand("compare", "l2 and linf norms of the difference of two .bdwf fields");
    compare->add_option("a", fa, "first field")->required();
    compare->add_option("b", fb, "second field")->required();
    compare->add_option("--out", cmp_out, "directory for compare.csv");

    Common wkb_c;
    wkb_c.external = "harmonic";
    wkb_c.M = 8;
    WkbArgs w;
    auto* wkb = app.add_subcommand("wkb", "semiclassical WKB pipeline, optionally compared with BD");
    add_common(wkb, wkb_c);
    wkb->add_option("--band", w.band, "band index m (1-based)")->capture_default_str();
    wkb->add_option("--phi0", w.phi0, "zero | neg-cos")->capture_default_str();
    wkb->add_option("--f0", w.f0, "slow amplitude (gaussian)")->capture_default_str();
    wkb->add_option("--t-end", w.t_end, "final time")->capture_default_str();
    wkb->add_option("--nx", w.nx, "macroscopic grid size")->capture_default_str();
    wkb->add_option("--hj-dt", w.hj_dt, "HJ and transport step (default: CFL 0.45, at most 1e-3)");
    wkb->add_flag("--compare", w.compare, "run BD alongside and tabulate the difference");
    wkb->add_option("--samples", w.samples, "comparison times")->capture_default_str();
    wkb->add_option("--bd-steps", w.bd_steps, "BD steps for the comparison run")->capture_default_str();

    std::string config_path, format = "all", conv_out;
    auto* conv = app.add_subcommand("convergence", "run a convergence study from a key=value config file");
    conv->add_option("--config", config_path, "config file")->required();
    conv->add_option("--format", format, "csv | markdown | svg | all")->capture_default_str();
    conv->add_option("--out", conv_out, "output directory (overrides the config)");

    std::uint64_t seed = 1;
    auto* st = app.add_subcommand("selftest", "run the invariant suites at small sizes");
    st->add_option("--seed", seed, "seed for randomized checks")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) set_thread_count(threads);

    try {
        if (*bands) return run_bands(bands_c, write_cache);
        if (*evolve_cmd) return run_evolve(ev_c, scheme, order, T, steps, snapshot_every, band_masses, cache);
        if (*compare) return run_compare(fa, fb, cmp_out);
        if (*wkb) return run_wkb(wkb_c, w);
        if (*conv) return run_convergence(config_path, format, conv_out);
        if (*st) return run_selftest(seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
