#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "detm/control.hpp"
#include "detm/lyapunov.hpp"
#include "detm/sde.hpp"
#include "detm/trigger.hpp"

namespace detm {

/// Everything one Monte Carlo run needs besides (n_paths, seed).
struct SimulationSetup {
    SdeSystem system;
    SwitchingController controller;
    TriggerConfig trigger;
    Vector x0;
    TimeGrid grid;
};

struct SummaryStat {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
    std::size_t count = 0;

    bool operator==(const SummaryStat&) const = default;
};

struct EventStats {
    SummaryStat primary_dwell;
    SummaryStat secondary_dwell;
    SummaryStat full_cycle;
    SummaryStat triggers_per_path;  // switches after the initial phase entry
    double duty_cycle_mean = 0.0;

    bool operator==(const EventStats&) const = default;
};

struct EnsembleStats {
    TimeGrid grid;
    Vector mean_sq;  // (1/N) sum_j |x_j(t_k)|^2 over non-diverged paths
    Vector std_error;  // Monte Carlo standard error of |x|^2
    std::size_t n_paths = 0;
    std::size_t n_diverged = 0;
    EventStats events;
    std::size_t warning_count = 0;

    double time(std::size_t k) const { return grid.time(k); }

    bool operator==(const EnsembleStats& o) const {
        return mean_sq == o.mean_sq && std_error == o.std_error && n_paths == o.n_paths && n_diverged == o.n_diverged &&
               events == o.events && warning_count == o.warning_count;
    }
};

struct EnsembleResult {
    EnsembleStats stats;
    std::vector<PathRecord> paths;
};

class AllPathsDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EnsembleOptions {
    std::size_t n_paths = 100;
    std::uint64_t seed = 0;
    /// 0 = OpenMP default (capped by DETM_SIM_THREADS when set).
    int workers = 0;
};

/// Paths j = 0..N-1 use NoiseStream(seed, j); paths run in parallel and are
/// reduced in path-index order, so output does not depend on `workers`.
EnsembleResult run_ensemble(const SimulationSetup& setup, const EnsembleOptions& opts);

/// Single-threaded reference for `run_ensemble`.
EnsembleResult run_ensemble_serial(const SimulationSetup& setup, const EnsembleOptions& opts);

/// Worker count from DETM_SIM_THREADS, or 0 when unset.
int workers_from_env();

/// Pairwise (tree) summation in index order.
double pairwise_sum(std::span<const double> v);

/// Aggregates already simulated paths. Throws AllPathsDiverged.
EnsembleStats reduce_paths(const std::vector<PathRecord>& paths, const TimeGrid& grid);

struct DecayFit {
    double t_a = 0.0;
    double t_b = 0.0;
    double rate = 0.0;       // slope of ln(mean_sq) vs t
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

inline constexpr double kFitFloor = 1e-12;
inline constexpr std::size_t kMinFitPoints = 10;

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Least-squares fit of ln(mean_sq) against t over [t_a, t_b], using entries
/// above kFitFloor.
DecayFit fit_decay(const EnsembleStats& stats, double t_a, double t_b);
DecayFit fit_decay(std::span<const double> times, std::span<const double> values, double t_a, double t_b);

/// Default window [horizon/5, horizon].
DecayFit fit_decay(const EnsembleStats& stats);

struct ClaimCheck {
    std::string claim;
    bool pass = false;
    double worst_ratio = 0.0;  // observed / allowed at the tightest point
    double worst_time = 0.0;
    std::string note;
};

struct TheoremCheckOptions {
    double stderr_multiplier = 3.0;
    /// Margin on the asymptotic bound when checked on a finite horizon.
    double safety_factor = 2.0;
    bool exponential_claim = true;
};

/// mean_sq(t) <= K e^{-lambda t} + 3 stderr(t) everywhere; with a bounded-tail
/// limit, sup over the second half of the horizon <= L1_limit * safety_factor.
std::vector<ClaimCheck> theorem_check(const EnsembleStats& stats, const TheoremBounds& bounds, double lambda,
                                      const TheoremCheckOptions& opts = {});

/// Checks every logged event against the recorded state, then re-runs the
/// trigger on the recorded |x_k|^2 and compares logs. Returns descriptions of
/// any mismatch.
std::vector<std::string> replay_trigger_consistency(const PathRecord& path, const TriggerConfig& trigger);

/// Recomputes each applied control from the recorded mode and state.
std::vector<std::string> replay_controls(const PathRecord& path, const SwitchingController& controller);

}  // namespace detm
