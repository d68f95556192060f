#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "coldamp/io.hpp"

using namespace coldamp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("coldamp_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_kind(const std::string& kind, const std::string& cfg_text, const fs::path& dir,
             std::string* err_out = nullptr) {
    const fs::path cfg = dir / "run.ini";
    write_file(cfg.string(), cfg_text);
    cli::RunConfig rc;
    rc.kind = kind;
    rc.config_path = cfg.string();
    rc.out_dir = (dir / "out").string();
    rc.quiet = true;
    std::ostringstream log, err;
    const int code = cli::run(rc, log, err);
    if (err_out) *err_out = err.str();
    return code;
}

const char* kDevice =
    "[device]\npreset = membrane\ntemperature_mk = 20\nn_c_thermal = 0.42\nn_add = 2.5\n"
    "[probe]\ndetuning_hz = -2000\ng_hz = 6320\n";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("empty parameter file lists the required keys") {
    std::string err;
    CHECK(run_kind("cool-sweep", "", scratch("empty"), &err) == cli::kConfigError);
    CHECK(err.find("temperature_mk") != std::string::npos);
    CHECK(err.find("omega_m_hz") != std::string::npos);
    CHECK(err.find("gamma_hz") != std::string::npos);
}

TEST_CASE("unknown keys are a hard error") {
    std::string err;
    CHECK(run_kind("cool-sweep", std::string(kDevice) + "[sweep]\npoints = 5\npoitns = 4\n",
                   scratch("typo"), &err) == cli::kConfigError);
    CHECK(err.find("poitns") != std::string::npos);
}

TEST_CASE("invalid physical values are config errors") {
    std::string err;
    CHECK(run_kind("cool-sweep", "[device]\npreset = membrane\nn_m_thermal = -3\n",
                   scratch("neg"), &err) == cli::kConfigError);
}

TEST_CASE("cool sweep table, manifest and determinism") {
    const fs::path d = scratch("cool");
    const std::string cfg = std::string(kDevice) + "[sweep]\npoints = 25\n";
    REQUIRE(run_kind("cool-sweep", cfg, d) == cli::kSuccess);
    const std::string first = read_file((d / "out" / "cool_sweep.csv").string());
    const std::string manifest = read_file((d / "out" / "manifest.json").string());
    REQUIRE(run_kind("cool-sweep", cfg, d) == cli::kSuccess);
    CHECK(read_file((d / "out" / "cool_sweep.csv").string()) == first);
    CHECK(read_file((d / "out" / "manifest.json").string()) == manifest);
    CHECK(manifest.find(sha256_hex(first)) != std::string::npos);

    const Table t = Table::from_csv(first);
    CHECK(t.comment.find("schema=coldamp/cool-sweep/cool_sweep/v1") == 0);
    CHECK(t.comment.find("manifest=manifest.json") != std::string::npos);
    CHECK(t.columns == std::vector<std::string>{"gain_a0_hz", "gamma_eff_hz", "n_T", "n_ba", "n_fb", "n_m"});
    CHECK(t.rows.size() == 25);
    // occupancy falls then rises with gain
    double lo = 1e300;
    std::size_t imin = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        if (t.rows[i][5] < lo) lo = t.rows[i][5], imin = i;
    CHECK(imin > 0);
    CHECK(imin + 1 < t.rows.size());
}

TEST_CASE("asymmetry sweep produces Kerr and no-Kerr curves") {
    const fs::path d = scratch("asym");
    const std::string cfg = std::string(kDevice) +
                            "[thermometry]\ndelta_hz = -48000\ng_hz = 100\n"
                            "[sweep]\ngain_min_hz = 50\ngain_max_hz = 5000\npoints = 3\nk_eff_hz = 0, 1200\n";
    REQUIRE(run_kind("asymmetry-sweep", cfg, d) == cli::kSuccess);
    const Table t = Table::load((d / "out" / "asymmetry_sweep.csv").string());
    REQUIRE(t.rows.size() == 6);
    const std::size_t e = t.column("eta");
    CHECK(std::abs(t.rows[0][e] - t.rows[3][e]) > 0.01);
}

TEST_CASE("seed override changes synthetic data only through the seed") {
    const fs::path d = scratch("seed");
    const std::string cfg = "[device]\npreset = membrane\ntemperature_mk = 20\n"
                            "[synthetic]\nn_add = 2.5\n";
    REQUIRE(run_kind("calibrate-nadd", cfg, d) == cli::kSuccess);
    const std::string a = read_file((d / "out" / "traces.csv").string());
    REQUIRE(run_kind("calibrate-nadd", cfg + "[run]\nseed = 9\n", d) == cli::kSuccess);
    CHECK(read_file((d / "out" / "traces.csv").string()) != a);
}

TEST_CASE("compare reports deviations and schema mismatches") {
    const fs::path d = scratch("cmp");
    Table a;
    a.columns = {"x", "y"};
    a.rows = {{1.0, 2.0}, {3.0, 4.0}};
    write_file((d / "a.csv").string(), a.to_csv());
    Table b = a;
    b.rows[1][1] = 4.4;
    write_file((d / "b.csv").string(), b.to_csv());
    Table c = a;
    c.columns = {"x", "z"};
    write_file((d / "c.csv").string(), c.to_csv());

    const auto same = cli::compare_tables((d / "a.csv").string(), (d / "a.csv").string());
    for (const auto& dev : same) CHECK(dev.max_relative == 0.0);
    const auto diff = cli::compare_tables((d / "a.csv").string(), (d / "b.csv").string());
    CHECK(diff[1].max_relative == doctest::Approx(0.4 / 4.4));
    CHECK(diff[1].mean_relative == doctest::Approx(0.2 / 4.4));
    CHECK_THROWS_AS(cli::compare_tables((d / "a.csv").string(), (d / "c.csv").string()), ConfigError);

    std::ostringstream log, err;
    CHECK(cli::compare((d / "a.csv").string(), (d / "a.csv").string(), 0.0, "", true, log, err) ==
          cli::kSuccess);
    CHECK(cli::compare((d / "a.csv").string(), (d / "b.csv").string(), 0.05, "", true, log, err) ==
          cli::kComparisonFailure);
    CHECK(cli::compare((d / "a.csv").string(), (d / "b.csv").string(), 0.1, "", true, log, err) ==
          cli::kSuccess);
}

TEST_CASE("fit kind reads a spectrum file") {
    const fs::path d = scratch("fit");
    Spectrum s;
    for (int i = 0; i <= 400; ++i) {
        const double w = from_hz(-50.0 + 0.25 * i);
        const double x = 2.0 * w / from_hz(4.0);
        s.frequencies.push_back(w);
        s.psd.push_back(1.0 + 3.0 / (1.0 + x * x));
    }
    write_file((d / "s.csv").string(), spectrum_table(s, "").to_csv());
    const std::string cfg = "[input]\nspectrum = " + (d / "s.csv").string() + "\n";
    REQUIRE(run_kind("fit", cfg, d) == cli::kSuccess);
    const auto j = nlohmann::json::parse(read_file((d / "out" / "fit.json").string()));
    CHECK(j["line"]["fwhm_hz"].get<double>() == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(j["line"]["area_hz"].get<double>() == doctest::Approx(0.5 * M_PI * 3.0 * 4.0).epsilon(1e-9));
}

}
