#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coldamp::cli {

enum ExitCode : int {
    kSuccess = 0,
    kConfigError = 2,
    kSolverError = 3,
    kComparisonFailure = 4,
};

inline const std::vector<std::string> kExperimentKinds = {
    "spectrum",       "cool-sweep",   "asymmetry-sweep", "calibrate-nadd",
    "calibrate-thermometry", "simulate-time", "fit-kerr", "fit",
};

struct RunConfig {
    std::string kind;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> grid_points;
    bool quiet = false;
};

/// Runs one experiment; writes CSV/JSON artifacts plus manifest.json into out_dir.
int run(const RunConfig& cfg, std::ostream& log, std::ostream& err);

struct ColumnDeviation {
    std::string column;
    double max_relative = 0.0;
    double mean_relative = 0.0;
};

/// Per-column relative deviations of two tables with identical schemas.
/// Throws ConfigError on schema mismatch.
std::vector<ColumnDeviation> compare_tables(const std::string& model_csv,
                                            const std::string& reference_csv);

int compare(const std::string& model_csv, const std::string& reference_csv, double tolerance,
            const std::string& out_dir, bool quiet, std::ostream& log, std::ostream& err);

/// Full command line: `coldamp <kind> --config PATH [--out DIR] [--seed N]
/// [--grid-points N] [--quiet]` or `coldamp compare MODEL REFERENCE [--tolerance X]`.
int main_entry(int argc, char** argv);

}  // namespace coldamp::cli
