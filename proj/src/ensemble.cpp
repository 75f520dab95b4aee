#include "detm/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace detm {

namespace {

SummaryStat summarize(const std::vector<double>& v) {
    SummaryStat s;
    s.count = v.size();
    if (v.empty()) return s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    s.mean = pairwise_sum(v) / static_cast<double>(v.size());
    return s;
}

void check_setup(const SimulationSetup& setup, const EnsembleOptions& opts) {
    if (opts.n_paths == 0) throw std::invalid_argument("n_paths must be at least 1");
    if (!setup.trigger.spec) throw std::invalid_argument("trigger thresholds are not configured");
}

}  // namespace

double pairwise_sum(std::span<const double> v) {
    constexpr std::size_t kBlock = 8;
    if (v.size() <= kBlock) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

int workers_from_env() {
    const char* env = std::getenv("DETM_SIM_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0) return 0;
    return static_cast<int>(std::min<long>(v, 1024));
}

EnsembleStats reduce_paths(const std::vector<PathRecord>& paths, const TimeGrid& grid) {
    EnsembleStats st;
    st.grid = grid;
    st.n_paths = paths.size();
    std::vector<const PathRecord*> ok;
    for (const auto& p : paths) {
        if (p.diverged) {
            ++st.n_diverged;
        } else {
            ok.push_back(&p);
        }
        st.warning_count += p.warnings.size();
    }
    if (ok.empty()) {
        throw AllPathsDiverged("all " + std::to_string(paths.size()) + " paths diverged");
    }

    const std::size_t n_ok = ok.size();
    const std::size_t n_times = grid.steps + 1;
    st.mean_sq.resize(n_times);
    st.std_error.resize(n_times);
    std::vector<double> col(n_ok);
    std::vector<double> dev(n_ok);
    for (std::size_t k = 0; k < n_times; ++k) {
        for (std::size_t j = 0; j < n_ok; ++j) col[j] = squared_norm(ok[j]->state(k));
        const double mean = pairwise_sum(col) / static_cast<double>(n_ok);
        double se = 0.0;
        if (n_ok > 1) {
            for (std::size_t j = 0; j < n_ok; ++j) dev[j] = (col[j] - mean) * (col[j] - mean);
            const double var = pairwise_sum(dev) / static_cast<double>(n_ok - 1);
            se = std::sqrt(var / static_cast<double>(n_ok));
        }
        st.mean_sq[k] = mean;
        st.std_error[k] = se;
    }

    std::vector<double> primary;
    std::vector<double> secondary;
    std::vector<double> cycle;
    std::vector<double> triggers;
    std::vector<double> duty;
    for (const PathRecord* p : ok) {
        const auto iv = inter_event_intervals(p->events);
        primary.insert(primary.end(), iv.primary_dwell.begin(), iv.primary_dwell.end());
        secondary.insert(secondary.end(), iv.secondary_dwell.begin(), iv.secondary_dwell.end());
        cycle.insert(cycle.end(), iv.full_cycle.begin(), iv.full_cycle.end());
        triggers.push_back(p->events.empty() ? 0.0 : static_cast<double>(p->events.size() - 1));
        duty.push_back(duty_cycle(p->events, grid.horizon(), grid.t0));
    }
    st.events.primary_dwell = summarize(primary);
    st.events.secondary_dwell = summarize(secondary);
    st.events.full_cycle = summarize(cycle);
    st.events.triggers_per_path = summarize(triggers);
    st.events.duty_cycle_mean = pairwise_sum(duty) / static_cast<double>(duty.size());
    return st;
}

EnsembleResult run_ensemble_serial(const SimulationSetup& setup, const EnsembleOptions& opts) {
    check_setup(setup, opts);
    EnsembleResult r;
    r.paths.reserve(opts.n_paths);
    for (std::size_t j = 0; j < opts.n_paths; ++j) {
        r.paths.push_back(simulate_path(setup.system, setup.grid, setup.controller, setup.trigger,
                                        NoiseStream(opts.seed, j), setup.x0));
    }
    r.stats = reduce_paths(r.paths, setup.grid);
    return r;
}

EnsembleResult run_ensemble(const SimulationSetup& setup, const EnsembleOptions& opts) {
    check_setup(setup, opts);
    EnsembleResult r;
    r.paths.resize(opts.n_paths);
    std::vector<std::exception_ptr> errors(opts.n_paths);
    const int requested = opts.workers > 0 ? opts.workers : workers_from_env();
#ifdef _OPENMP
    const int workers = requested > 0 ? requested : omp_get_max_threads();
#else
    const int workers = 1;
    (void)requested;
#endif
    const auto n = static_cast<std::ptrdiff_t>(opts.n_paths);

#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        try {
            r.paths[idx] = simulate_path(setup.system, setup.grid, setup.controller, setup.trigger,
                                         NoiseStream(opts.seed, idx), setup.x0);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    r.stats = reduce_paths(r.paths, setup.grid);
    return r;
}

DecayFit fit_decay(std::span<const double> times, std::span<const double> values, double t_a, double t_b) {
    if (!(t_a < t_b)) throw std::invalid_argument("fit window must satisfy t_a < t_b");
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < times.size() && k < values.size(); ++k) {
        if (times[k] < t_a || times[k] > t_b) continue;
        if (!(values[k] > kFitFloor)) continue;
        xs.push_back(times[k]);
        ys.push_back(std::log(values[k]));
    }
    if (xs.size() < kMinFitPoints) {
        throw InsufficientData("decay fit needs at least " + std::to_string(kMinFitPoints) +
                               " points above the floor in [" + std::to_string(t_a) + ", " + std::to_string(t_b) +
                               "], found " + std::to_string(xs.size()));
    }
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    DecayFit fit;
    fit.t_a = t_a;
    fit.t_b = t_b;
    fit.points = xs.size();
    fit.rate = sxy / sxx;
    fit.intercept = my - fit.rate * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.intercept + fit.rate * xs[i]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

DecayFit fit_decay(const EnsembleStats& stats, double t_a, double t_b) {
    Vector times(stats.mean_sq.size());
    for (std::size_t k = 0; k < times.size(); ++k) times[k] = stats.time(k);
    return fit_decay(times, stats.mean_sq, t_a, t_b);
}

DecayFit fit_decay(const EnsembleStats& stats) {
    const double end = stats.grid.horizon();
    return fit_decay(stats, stats.grid.t0 + (end - stats.grid.t0) / 5.0, end);
}

std::vector<ClaimCheck> theorem_check(const EnsembleStats& stats, const TheoremBounds& bounds, double lambda,
                                      const TheoremCheckOptions& opts) {
    std::vector<ClaimCheck> out;
    if (opts.exponential_claim) {
        ClaimCheck c;
        c.claim = "exponential_mean_square";
        c.pass = true;
        c.worst_ratio = 0.0;
        for (std::size_t k = 0; k < stats.mean_sq.size(); ++k) {
            const double t = stats.time(k);
            const double allowed = bounds.K * std::exp(-lambda * t) + opts.stderr_multiplier * stats.std_error[k];
            const double ratio = allowed > 0.0 ? stats.mean_sq[k] / allowed : (stats.mean_sq[k] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            if (ratio > c.worst_ratio || k == 0) {
                c.worst_ratio = ratio;
                c.worst_time = t;
            }
            if (!(stats.mean_sq[k] <= allowed)) c.pass = false;
        }
        std::ostringstream note;
        note << "mean_sq(t) <= K e^{-lambda t} + " << opts.stderr_multiplier << " stderr(t) with K = " << bounds.K
             << ", gamma = " << bounds.gamma;
        c.note = note.str();
        out.push_back(std::move(c));
    }
    if (bounds.L1_limit) {
        ClaimCheck c;
        c.claim = "bounded_mean_square";
        const double limit = *bounds.L1_limit * opts.safety_factor;
        const double half = stats.grid.t0 + 0.5 * (stats.grid.horizon() - stats.grid.t0);
        double sup = 0.0;
        for (std::size_t k = 0; k < stats.mean_sq.size(); ++k) {
            if (stats.time(k) < half) continue;
            if (stats.mean_sq[k] >= sup) {
                sup = stats.mean_sq[k];
                c.worst_time = stats.time(k);
            }
        }
        c.worst_ratio = sup / limit;
        c.pass = sup <= limit;
        std::ostringstream note;
        note << "sup of mean_sq over the second half <= " << opts.safety_factor << " x asymptotic limit "
             << *bounds.L1_limit << " (finite-horizon safety factor on a lim sup bound)";
        c.note = note.str();
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<std::string> replay_trigger_consistency(const PathRecord& path, const TriggerConfig& trigger) {
    const ThresholdSpec& spec = *trigger.spec;
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < path.events.size(); ++i) {
        const Event& e = path.events[i];
        if (e.step >= path.num_states()) {
            problems.push_back("event at step " + std::to_string(e.step) + " has no recorded state");
            continue;
        }
        const double x2 = squared_norm(path.state(e.step));
        const bool initial = i == 0;
        bool ok = true;
        if (e.kind == EventKind::ToSecondary) {
            ok = x2 <= spec.h2(e.time);
        } else {
            ok = initial ? x2 > spec.h2(e.time) : x2 >= spec.upper(e.time);
        }
        if (!ok) {
            std::ostringstream msg;
            msg << to_string(e.kind) << " at t=" << e.time << " with |x|^2=" << x2 << " violates its threshold";
            problems.push_back(msg.str());
        }
    }
    if (path.num_states() == 0) return problems;

    // Re-run the trigger on the recorded |x_k|^2 and compare logs.
    const std::size_t last_query = path.diverged ? path.num_states() - 1 : path.grid.steps - 1;
    auto state = TriggerState::init(trigger.spec, trigger.tau, squared_norm(path.state(0)), path.grid.t0);
    EventLog replayed = {
        {path.grid.t0, state.phase() == Mode::Primary ? EventKind::ToPrimary : EventKind::ToSecondary, 0}};
    for (std::size_t k = 1; k <= last_query && k < path.num_states(); ++k) {
        const double t = path.grid.time(k);
        if (auto ev = state.step(t, squared_norm(path.state(k)))) replayed.push_back({t, *ev, k});
    }
    if (replayed != path.events) {
        problems.push_back("event log differs from a replay of the trigger (" + std::to_string(path.events.size()) +
                           " logged, " + std::to_string(replayed.size()) + " replayed)");
    }
    return problems;
}

std::vector<std::string> replay_controls(const PathRecord& path, const SwitchingController& controller) {
    std::vector<std::string> problems;
    const std::size_t rows = path.dim_control == 0 ? 0 : path.controls.size() / path.dim_control;
    for (std::size_t k = 0; k < rows; ++k) {
        const auto expected = control_input(controller, path.mode_at(k), path.state(k)).u;
        const auto applied = path.control(k);
        if (!std::equal(expected.begin(), expected.end(), applied.begin(), applied.end())) {
            problems.push_back("control mismatch at step " + std::to_string(k));
        }
    }
    return problems;
}

}  // namespace detm
