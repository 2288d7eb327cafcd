#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "cavityqed/scenarios.hpp"

using namespace cavityqed;
using namespace cavityqed::scenarios;
namespace fs = std::filesystem;

namespace {

RawConfig ini(const std::string& text) {
    std::istringstream in(text);
    return parse_ini(in, "test.ini");
}

std::string error_of(const std::string& text) {
    try {
        build_config(ini(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cavityqed_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

struct CliResult {
    int code;
    std::string out;
};

CliResult cli(const std::string& args, const fs::path& dir) {
    const auto log = dir / "stdout.txt";
    const std::string cmd = std::string(CAVITYQED_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::vector<double> csv_column(const std::string& text, const std::string& name) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    std::stringstream hs(line);
    for (std::string h; std::getline(hs, h, ',');) header.push_back(h);
    const auto col = std::size_t(std::find(header.begin(), header.end(), name) - header.begin());
    std::vector<double> out;
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::string cell;
        for (std::size_t i = 0; i <= col; ++i) std::getline(ls, cell, ',');
        out.push_back(std::stod(cell));
    }
    return out;
}

} // namespace

TEST(Config, TypedValuesWithUnits) {
    const auto c = build_config(ini("[cavity]\nkappa = 3.3\n[coupling]\ng=0.9 # comment\n[run]\nscenario = fig4-phase\n"));
    EXPECT_DOUBLE_EQ(c.params.kappa, 3.3);
    EXPECT_DOUBLE_EQ(c.params.g, 0.9);
    EXPECT_EQ(c.scenario, "fig4-phase");
}

TEST(Config, EmptyIsDeriveWithDefaults) {
    const auto c = build_config(ini(""));
    EXPECT_EQ(c.scenario, "derive");
    EXPECT_DOUBLE_EQ(c.params.kappa, model::ModelParams{}.kappa);
}

TEST(Config, StrictErrorsNameTheLine) {
    EXPECT_NE(error_of("[cavity]\nkappa = 3.3\nkapa = 1\n").find("test.ini:3"), std::string::npos);
    EXPECT_NE(error_of("[cavity]\nkappa 3.3\n").find("test.ini:2"), std::string::npos);
    EXPECT_NE(error_of("[cavity]\nkappa = 3.3\n\nkappa = 2\n").find("duplicate"), std::string::npos);
    EXPECT_NE(error_of("[cavty]\nkappa = 3.3\n").find("unknown section"), std::string::npos);
    EXPECT_NE(error_of("kappa = 3.3\n").find("before any"), std::string::npos);
    EXPECT_NE(error_of("[cavity]\nkappa = fast\n").find("expected a number"), std::string::npos);
    EXPECT_NE(error_of("[cavity]\nn_max = 2.5\n").find("expected an integer"), std::string::npos);
    EXPECT_NE(error_of("[cavity]\nkappa =\n").find("empty value"), std::string::npos);
    EXPECT_NE(error_of("[run]\nscenario = fig9\n").find("unknown scenario"), std::string::npos);
    EXPECT_NE(error_of("[cavity]\nkappa = -1\n").find("kappa"), std::string::npos);
    EXPECT_NE(error_of("[coupling]\ng = 0.5\npurcell = 38\n").find("either"), std::string::npos);
}

TEST(Config, PurcellSetsCoupling) {
    const auto c = build_config(ini("[coupling]\npurcell = 38\n[cavity]\nkappa = 3.3\n"));
    EXPECT_NEAR(c.params.g, model::g_from_purcell(38.0, 3.3, 14.67), 1e-15);
}

TEST(Csv, LocaleFreeShortestRoundTrip) {
    Table t;
    t.add("x", {0.1, -2.5e-7, 1.0 / 3.0});
    std::ostringstream o;
    write_csv(o, t);
    EXPECT_EQ(o.str(), "x\n0.1\n-2.5e-07\n0.3333333333333333\n");
    EXPECT_EQ(format_number(std::nan("")), "nan");
}

TEST(Svg, RendersSeriesAndLegend) {
    const auto svg = render_svg("t", "x", "y", {{"a", {0, 1, 2}, {1, 0, 1}}, {"b", {0, 1, 2}, {0, 1, 0}}});
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_EQ(std::count(svg.begin(), svg.end(), 'M') >= 2, true);
    EXPECT_NE(svg.find(">a</text>"), std::string::npos);
    EXPECT_NE(svg.find(">b</text>"), std::string::npos);
}

TEST(Cli, DeriveFromMeasuredLinewidths) {
    const auto dir = scratch("derive");
    const auto r = cli("derive --gamma-prime 604 --gamma0 44 --kappa 3.3", dir);
    EXPECT_EQ(r.code, 0);
    for (const char* s : {"F=38.2", "beta=0.927", "alpha_prime=0.951", "C=12.7", "g_ep_ghz=0.814"})
        EXPECT_NE(r.out.find(s), std::string::npos) << s << "\n" << r.out;
}

TEST(Cli, EmptyConfigRunsDerive) {
    const auto dir = scratch("empty");
    std::ofstream(dir / "empty.ini") << "";
    const auto r = cli("--config " + (dir / "empty.ini").string(), dir);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("scenario=derive"), std::string::npos);
}

TEST(Cli, FlagsOverrideFile) {
    const auto dir = scratch("override");
    std::ofstream(dir / "c.ini") << "[coupling]\ng = 0.5\n";
    const auto a = cli("--config " + (dir / "c.ini").string(), dir);
    EXPECT_NE(a.out.find("model_g_ghz=0.5\n"), std::string::npos) << a.out;
    const auto b = cli("--config " + (dir / "c.ini").string() + " --g 0.678", dir);
    EXPECT_NE(b.out.find("model_g_ghz=0.678\n"), std::string::npos) << b.out;
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("codes");
    EXPECT_EQ(cli("fig9", dir).code, 2);
    std::ofstream(dir / "bad.ini") << "[cavity]\nkapa = 3\n";
    const auto r = cli("--config " + (dir / "bad.ini").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("bad.ini:2"), std::string::npos);
    EXPECT_EQ(cli("--kappa -1", dir).code, 2);
    EXPECT_EQ(cli("--no-such-flag 1", dir).code, 2);
    // No drive: the photon number vanishes and g2 is undefined.
    EXPECT_EQ(cli("fig5-g2 --regime resonant --eta 0 --output " + dir.string(), dir).code, 3);
}

TEST(Cli, HelpDocumentsEveryFlag) {
    const auto dir = scratch("help");
    const auto r = cli("--help", dir);
    EXPECT_EQ(r.code, 0);
    for (const auto& k : key_registry()) {
        if (k.id() == "run.scenario") continue;
        EXPECT_NE(r.out.find(k.flag() + " "), std::string::npos) << k.flag();
        if (!k.unit.empty() && k.unit != "bool") {
            EXPECT_NE(r.out.find("[" + k.unit + "]"), std::string::npos) << k.unit;
        }
    }
}

TEST(Cli, TransmissionScenarioShowsExtinction) {
    const auto dir = scratch("fig2");
    ASSERT_EQ(cli("fig2-transmission --output " + dir.string(), dir).code, 0);
    const auto text = slurp(dir / "fig2-transmission.csv");
    EXPECT_EQ(text.substr(0, text.find('\n')), "freq_ghz,transmission,reflection,phase_deg,excited_pop");
    const auto t = csv_column(text, "transmission");
    EXPECT_LE(*std::min_element(t.begin(), t.end()), 0.01);
}

TEST(Cli, ByteIdenticalReruns) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    for (const auto& d : {a, b}) {
        ASSERT_EQ(cli("fig6-single-photon --noise --seed 7 --plot --output " + d.string(), d).code, 0);
        ASSERT_EQ(cli("saturation --eta-points 12 --output " + d.string(), d).code, 0);
    }
    for (const char* f : {"fig6-single-photon.csv", "fig6-single-photon.svg", "saturation.csv"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    const auto c = scratch("det_c");
    ASSERT_EQ(cli("fig6-single-photon --noise --seed 8 --output " + c.string(), c).code, 0);
    EXPECT_NE(slurp(a / "fig6-single-photon.csv"), slurp(c / "fig6-single-photon.csv"));
}

TEST(Scenarios, EveryScenarioRuns) {
    for (const auto& name : scenario_names()) {
        ScenarioConfig c;
        c.scenario = name;
        c.grid.freq_points = 41;
        c.grid.delta_cm_values = {-1.65, 0.0, 1.65};
        c.grid.eta_points = 6;
        c.grid.c_points = 5;
        c.grid.eta_values = {0.0, 0.1};
        c.regime = "resonant";
        const auto o = run_scenario(c);
        EXPECT_FALSE(o.summary.empty()) << name;
        if (!o.csv_name.empty()) {
            EXPECT_GT(o.table.rows(), 0u) << name;
        }
    }
}

TEST(Scenarios, SchemasMatchContract) {
    ScenarioConfig c;
    c.grid.freq_points = 11;
    c.scenario = "fig2-reflection";
    EXPECT_EQ(run_scenario(c).table.header,
              (std::vector<std::string>{"freq_ghz", "transmission", "reflection", "phase_deg", "excited_pop"}));
    c.scenario = "saturation";
    c.grid.eta_points = 3;
    EXPECT_EQ(run_scenario(c).table.header,
              (std::vector<std::string>{"eta_ghz", "S", "photons_per_lifetime", "dip_contrast"}));
    c.scenario = "fig5-g2";
    c.regime = "molecule-branch";
    const auto o = run_scenario(c);
    ASSERT_EQ(o.extra.size(), 1u);
    EXPECT_EQ(o.extra[0].second.header, (std::vector<std::string>{"tau_ns", "g2"}));
}
