#pragma once

// Run configuration: a strict JSON document with top-level keys
//
//   system, controller, trigger, grid, ensemble, x0      (required)
//   lyapunov, verify, output                             (optional)
//
// Expression variables: x1..xn (state), u1..ul (control, drift only),
// t (time; drift, diffusion and threshold functions).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "detm/ensemble.hpp"
#include "detm/lyapunov.hpp"

namespace detm {

struct SystemSection {
    std::string label;
    std::size_t dim_state = 1;
    std::size_t dim_noise = 1;
    std::size_t dim_control = 0;
    std::vector<std::string> drift;                   // n entries
    std::vector<std::vector<std::string>> diffusion;  // n rows x m columns

    bool operator==(const SystemSection&) const = default;
};

struct ClampSection {
    Vector lower;
    Vector upper;

    bool operator==(const ClampSection&) const = default;
};

struct ControllerSection {
    std::string label;
    std::vector<std::string> k1;  // l entries
    std::vector<std::string> k2;
    std::optional<ClampSection> clamp;

    bool operator==(const ControllerSection&) const = default;
};

struct LyapunovSection {
    std::string V;
    std::optional<std::vector<std::string>> grad;
    std::optional<std::vector<std::vector<std::string>>> hess;

    bool operator==(const LyapunovSection&) const = default;
};

struct DeltaTable {
    std::vector<std::pair<double, double>> breakpoints;

    bool operator==(const DeltaTable&) const = default;
};

/// number | {"expression": "..."} | {"table": [[t, value], ...]}
using DeltaSection = std::variant<double, std::string, DeltaTable>;

struct TriggerSection {
    std::string form = "exponential";  // exponential | exponential_plus_delta | generic
    double M1 = 0.0;
    double M2 = 0.0;
    double lambda = 0.0;
    std::string h1;  // generic only
    std::string h2;
    double tau = 0.0;
    std::optional<DeltaSection> delta;
    double watchdog_fraction = 0.8;

    bool is_exponential() const { return form != "generic"; }
    bool operator==(const TriggerSection&) const = default;
};

struct GridSection {
    double t0 = 0.0;
    double dt = 0.1;
    std::size_t steps = 0;

    bool operator==(const GridSection&) const = default;
};

struct EnsembleSection {
    std::size_t n_paths = 100;
    std::uint64_t seed = 0;

    bool operator==(const EnsembleSection&) const = default;
};

struct ClaimsSection {
    std::optional<double> c1;
    std::optional<double> c2;
    std::optional<double> mu;
    std::optional<double> c3;

    bool complete() const { return c1 && c2 && mu && c3; }
    bool operator==(const ClaimsSection&) const = default;
};

struct VerifySection {
    std::vector<std::pair<double, double>> box;
    std::size_t samples = 100000;
    std::size_t axis_points = 64;
    double M_bar = 0.0;
    std::optional<double> lambda_bar;
    double t_max = 0.0;
    std::optional<double> gamma;
    ClaimsSection claims;

    bool operator==(const VerifySection&) const = default;
};

struct OutputSection {
    std::string dir = "out";

    bool operator==(const OutputSection&) const = default;
};

struct RunConfig {
    SystemSection system;
    ControllerSection controller;
    TriggerSection trigger;
    GridSection grid;
    EnsembleSection ensemble;
    Vector x0;
    std::optional<LyapunovSection> lyapunov;
    std::optional<VerifySection> verify;
    std::optional<OutputSection> output;

    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> errors);
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    std::vector<std::string> errors_;
};

/// Strict parse: unknown keys, wrong types and semantic violations are all
/// collected and thrown together as one ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every semantic violation, empty when valid.
std::vector<std::string> validate(const RunConfig& cfg);

nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Command-line values that shadow the file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_paths;
    std::optional<double> tau;
    std::optional<double> delta;  // <= 0 removes delta
    std::optional<double> lambda;
    std::optional<double> M1;
    std::optional<double> M2;
    bool uncontrolled = false;
    std::optional<std::string> output_dir;
};

/// Applies overrides and revalidates; throws ConfigError.
RunConfig apply_overrides(RunConfig cfg, const Overrides& o);

/// Runtime objects built from a validated configuration.
struct Problem {
    RunConfig config;
    SimulationSetup setup;
    std::optional<LyapunovCandidate> candidate;
    EnsembleOptions ensemble;
};

Problem build_problem(const RunConfig& cfg);

/// Sampling inputs for verification; requires the lyapunov and verify sections.
VerifyInputs verify_inputs(const Problem& p);

/// Report assembled from claimed constants only, without sampling. Requires
/// all four claims.
std::optional<AssumptionReport> report_from_claims(const RunConfig& cfg);

std::vector<std::string> state_names(std::size_t n);
std::vector<std::string> control_names(std::size_t l);

}  // namespace detm
