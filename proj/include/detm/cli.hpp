#pragma once

// detm-sim command line: simulate, verify, sweep, compare, presets, signal.

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "detm/ensemble.hpp"
#include "detm/config.hpp"

namespace detm::cli {

enum ExitCode : int {
    kOk = 0,
    kUsageError = 1,
    kDiverged = 2,
    kVerificationFailed = 3,
};

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

void write_stats_csv(std::ostream& os, const EnsembleStats& stats);
void write_events_csv(std::ostream& os, const std::vector<PathRecord>& paths);
/// path, t, x1..xn, u1..ul, mode for each given path.
void write_trajectory_csv(std::ostream& os, std::span<const PathRecord> paths);

/// Fit, event statistics, divergence counts and theorem checks of one run.
nlohmann::ordered_json result_json(const Problem& problem, const EnsembleResult& result);

nlohmann::ordered_json report_json(const AssumptionReport& report, const RunConfig& cfg);

}  // namespace detm::cli
