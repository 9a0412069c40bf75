#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <numbers>

#include "blochdec/harness.hpp"

using namespace blochdec;
namespace fs = std::filesystem;

namespace {

constexpr char small_time_study[] = R"(# tiny temporal study
scenario = tiny
study = time
epsilon = 1/8
R = 16
M = 8
Lambda = 16
external = harmonic
schemes = bd, ts
dt = 1/20, 1/40
T = 0.1
)";

fs::path scratch_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("blochdec_test_" + name);
    fs::remove_all(d);
    return d;
}

ErrorReport synthetic(const std::vector<double>& h, double order) {
    ErrorReport r;
    r.scenario = "synthetic";
    r.parameter = "dt";
    r.h = h;
    SchemeErrors s;
    for (double x : h) {
        s.l2.push_back(3.0 * std::pow(x, order));
        s.linf.push_back(std::pow(x, order));
        s.mass_drift.push_back(0.0);
        s.seconds_per_step.push_back(1e-3);
    }
    r.rows.push_back(s);
    return r;
}

}  // namespace

TEST(Config, ParsesFractionsListsAndComments) {
    const auto c = ExperimentConfig::parse(small_time_study);
    EXPECT_EQ(c.scenario, "tiny");
    EXPECT_DOUBLE_EQ(c.epsilon, 0.125);
    ASSERT_EQ(c.dt.size(), 2u);
    EXPECT_DOUBLE_EQ(c.dt[1], 0.025);
    ASSERT_EQ(c.schemes.size(), 2u);
    EXPECT_EQ(c.schemes[1], Scheme::ts);
    EXPECT_EQ(c.reference_time_factor, 10u);
    EXPECT_EQ(ExperimentConfig::parse(c.canonical()).canonical(), c.canonical());
}

TEST(Config, Rejections) {
    EXPECT_THROW(ExperimentConfig::parse("colour = blue\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("epsilon\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("dt = 0.1, 0.2\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("epsilon = 0.3\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("epsilon = 1/0x\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("study = space\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("study = space\nR_list = 16, 8\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("schemes = cn\n"), Error);
    EXPECT_THROW(ExperimentConfig::parse("lattice = honeycomb\n"), Error);
}

TEST(Orders, SyntheticPowerLaws) {
    const std::vector<double> h{0.1, 0.05, 0.025, 0.0125};
    for (double p : {1.0, 2.0, 4.0}) {
        const auto r = synthetic(h, p);
        for (const auto& o : observed_orders(h, r.rows[0].l2)) {
            ASSERT_TRUE(o.has_value());
            EXPECT_NEAR(*o, p, 1e-10);
        }
        EXPECT_NEAR(fitted_order(h, r.rows[0].linf), p, 1e-10);
    }
    // Non-uniform refinement is measured against the actual ratio.
    const std::vector<double> h3{0.3, 0.1, 0.025};
    for (const auto& o : observed_orders(h3, {0.09, 0.01, 0.000625})) EXPECT_NEAR(*o, 2.0, 1e-10);
}

TEST(Orders, ZeroErrorLeavesBlankCell) {
    const auto o = observed_orders({0.1, 0.05, 0.025}, {1e-3, 0.0, 1e-5});
    EXPECT_FALSE(o[0].has_value());
    EXPECT_FALSE(o[1].has_value());
    const auto r = synthetic({0.1}, 2.0);
    const auto csv = render_report(r, ReportFormat::csv);
    EXPECT_NE(csv.find("bd_l2_order,\n"), std::string::npos);
}

TEST(Report, CsvLayout) {
    const auto r = synthetic({0.1, 0.05, 0.025}, 2.0);
    const auto csv = render_report(r, ReportFormat::csv);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "dt,1.00000e-01,5.00000e-02,2.50000e-02");
    std::getline(in, line);
    EXPECT_EQ(line, "bd_l2,3.00000e-02,7.50000e-03,1.87500e-03");
    std::getline(in, line);
    EXPECT_EQ(line, "bd_l2_order,,2.00,2.00");
    std::size_t rows = 3;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3) << line;
    }
    EXPECT_EQ(rows, 6u);
    const auto md = render_report(r, ReportFormat::markdown);
    EXPECT_EQ(md.substr(0, md.find('\n')), "| dt | 1.00000e-01 | 5.00000e-02 | 2.50000e-02 |");
    EXPECT_NE(render_report(r, ReportFormat::svg).find("<svg"), std::string::npos);
}

TEST(Report, EmitIsByteReproducible) {
    const auto r = synthetic({0.1, 0.05}, 1.0);
    const auto a = scratch_dir("emit_a"), b = scratch_dir("emit_b");
    for (auto f : {ReportFormat::csv, ReportFormat::markdown, ReportFormat::svg}) {
        const auto files = emit_report(r, f, a);
        emit_report(r, f, b);
        for (const auto& name : files) EXPECT_EQ(io::read_file(a / name), io::read_file(b / name)) << name;
    }
    EXPECT_TRUE(fs::exists(a / "timing.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Report, ManifestListsFiles) {
    const auto d = scratch_dir("manifest");
    const auto files = emit_report(synthetic({0.1, 0.05}, 1.0), ReportFormat::csv, d);
    write_manifest(d, "convergence", "scenario=x\n", files);
    const auto j = nlohmann::json::parse(io::read_file(d / "manifest.json"));
    EXPECT_EQ(j["tool"], "blochdec");
    EXPECT_EQ(j["command"], "convergence");
    EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);
    ASSERT_EQ(j["files"].size(), 2u);
    EXPECT_EQ(j["files"][0]["name"], "report.csv");
    EXPECT_EQ(j["files"][0]["bytes"].get<std::size_t>(), fs::file_size(d / "report.csv"));
    fs::remove_all(d);
}

TEST(Compare, ConstantFieldNorms) {
    const auto g = build_grid(1.0 / 4.0, 8);
    WaveField a(g), b(g);
    for (auto& v : a.values()) v = 0.75;
    const auto n = compare_solutions(a, b);
    EXPECT_NEAR(n.l2, 0.75 * std::sqrt(2.0 * std::numbers::pi), 1e-14);
    EXPECT_DOUBLE_EQ(n.linf, 0.75);
    EXPECT_THROW((void)compare_solutions(a, WaveField(build_grid(1.0 / 4.0, 16))), Error);
}

TEST(Study, TemporalRunsBothSchemes) {
    const auto r = run_convergence_study(ExperimentConfig::parse(small_time_study));
    EXPECT_EQ(r.parameter, "dt");
    ASSERT_EQ(r.rows.size(), 2u);
    for (const auto& s : r.rows) {
        ASSERT_EQ(s.l2.size(), 2u);
        EXPECT_GT(s.l2[0], s.l2[1]);
    }
    EXPECT_LE(r.rows[0].mass_drift[0], 1e-4);
}

TEST(Study, SingleLevelHasBlankOrders) {
    auto c = ExperimentConfig::parse(small_time_study);
    c.dt = {0.05};
    c.schemes = {Scheme::bd};
    const auto csv = render_report(run_convergence_study(c), ReportFormat::csv);
    EXPECT_NE(csv.find("bd_l2_order,\n"), std::string::npos);
}

TEST(Study, ReferenceMustBeFiner) {
    auto c = ExperimentConfig::parse(small_time_study);
    c.reference_time_factor = 1;
    try {
        (void)run_convergence_study(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ReferenceTooCoarse);
    }
    c.reference_time_factor = 10;
    c.reference_space_factor = 1;
    EXPECT_THROW((void)run_convergence_study(c), Error);
}

TEST(Selftest, AllChecksPass) {
    for (std::uint64_t seed : {1u, 7u}) {
        const auto r = selftest(seed);
        EXPECT_TRUE(r.passed()) << (r.first_failure() ? r.first_failure()->name + ": " + r.first_failure()->detail : "");
        EXPECT_GE(r.checks.size(), 10u);
    }
}
