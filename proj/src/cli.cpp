#include "detm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "detm/format.hpp"
#include "detm/models.hpp"

namespace detm::cli {

using oj = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_paths;
    std::optional<double> tau;
    std::optional<double> delta;
    std::optional<double> lambda;
    std::optional<double> M1;
    std::optional<double> M2;
    bool uncontrolled = false;

    Overrides overrides() const {
        Overrides o;
        o.seed = seed;
        o.n_paths = n_paths;
        o.tau = tau;
        o.delta = delta;
        o.lambda = lambda;
        o.M1 = M1;
        o.M2 = M2;
        o.uncontrolled = uncontrolled;
        if (!out_dir.empty()) o.output_dir = out_dir;
        return o;
    }
};

void add_source_options(CLI::App& cmd, Common& c) {
    auto* cfg = cmd.add_option("--config", c.config_path, "JSON run configuration");
    auto* pre = cmd.add_option("--preset", c.preset, "built-in model (see `presets list`)");
    cfg->excludes(pre);
    cmd.add_option("--out", c.out_dir, "output directory (default: output.dir or ./out)");
    cmd.add_option("--threads", c.threads, "worker threads (default: DETM_SIM_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
}

void add_run_overrides(CLI::App& cmd, Common& c) {
    cmd.add_option("--seed", c.seed, "ensemble seed");
    cmd.add_option("--n-paths", c.n_paths, "number of Monte Carlo paths")->check(CLI::PositiveNumber);
    cmd.add_option("--tau", c.tau, "dwell time of the primary phase");
    cmd.add_option("--delta", c.delta, "constant delta added to h1 (<= 0 removes it)");
    cmd.add_flag("--uncontrolled", c.uncontrolled, "replace both control maps by zero");
}

void add_threshold_overrides(CLI::App& cmd, Common& c) {
    cmd.add_option("--lambda", c.lambda, "threshold decay rate");
    cmd.add_option("--M1", c.M1, "upper threshold amplitude");
    cmd.add_option("--M2", c.M2, "lower threshold amplitude");
}

RunConfig load(const Common& c) {
    RunConfig cfg;
    if (!c.config_path.empty()) {
        cfg = load_config(c.config_path);
    } else if (!c.preset.empty()) {
        const auto p = find_preset(c.preset);
        if (!p) throw UsageError("unknown preset '" + c.preset + "'");
        cfg = p->config;
    } else {
        throw UsageError("one of --config or --preset is required");
    }
    return apply_overrides(std::move(cfg), c.overrides());
}

fs::path output_dir(const RunConfig& cfg) { return cfg.output ? fs::path(cfg.output->dir) : fs::path("out"); }

// The echoed config leaves out the output section so that a summary does not
// depend on where it was written.
oj echo_config(RunConfig cfg) {
    cfg.output.reset();
    return to_json(cfg);
}

EnsembleOptions ensemble_options(const Problem& p, int threads) {
    EnsembleOptions o = p.ensemble;
    o.workers = threads;
    return o;
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    os << content;
    if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

template <class F>
std::string render(F&& f) {
    std::ostringstream os;
    f(os);
    return os.str();
}

std::string json_text(const oj& j) { return j.dump(2) + "\n"; }

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

oj stat_json(const SummaryStat& s) {
    if (s.count == 0) return {{"count", 0}, {"min", nullptr}, {"mean", nullptr}, {"max", nullptr}};
    return {{"count", s.count}, {"min", s.min}, {"mean", s.mean}, {"max", s.max}};
}

oj fit_json(const DecayFit& f) {
    return {{"t_a", f.t_a},         {"t_b", f.t_b},           {"rate", f.rate},
            {"intercept", f.intercept}, {"r_squared", f.r_squared}, {"points", f.points}};
}

std::optional<AssumptionReport> effective_report(const Problem& p) {
    if (auto r = report_from_claims(p.config)) return r;
    if (!p.candidate || !p.config.verify) return std::nullopt;
    return verify_assumptions(verify_inputs(p));
}

oj theorem_json(const Problem& p, const EnsembleStats& stats) {
    const auto& spec = *p.setup.trigger.spec;
    if (!spec.exponential_params()) {
        return {{"applicable", false}, {"note", "thresholds are not exponential"}};
    }
    if (!p.candidate || !p.config.verify) {
        return {{"applicable", false}, {"note", "no lyapunov/verify sections"}};
    }
    const auto report = effective_report(p);
    const bool claimed = p.config.verify->claims.complete();
    const auto& ep = *spec.exponential_params();
    oj out;
    out["applicable"] = true;
    out["constants_source"] = claimed ? "claimed" : "certified";
    out["constants"] = {{"c1", report->c1}, {"c2", report->c2}, {"mu", report->mu},
                        {"M_bar", report->M_bar}, {"c3", report->c3}};
    out["lambda"] = ep.lambda;
    const auto rate = check_rate_admissibility(*report, ep.lambda);
    out["rate_check"] = {{"pass", rate.pass}, {"detail", rate.detail}};
    if (!rate.pass) {
        out["bounds"] = nullptr;
        out["checks"] = oj::array();
        return out;
    }
    std::optional<double> constant_delta;
    if (const auto& d = spec.delta_function(); d && d->kind() == DeltaFunction::Kind::Constant) {
        constant_delta = d->limit_value();
    }
    const TheoremBounds bounds = theorem_bounds(*report, ep.lambda, ep.m1, report->M_bar,
                                                squared_norm(p.setup.x0), constant_delta, p.config.verify->gamma);
    out["bounds"] = {{"gamma", bounds.gamma}, {"K", bounds.K}};
    out["bounds"]["L1_limit"] = bounds.L1_limit ? oj(*bounds.L1_limit) : oj(nullptr);
    TheoremCheckOptions opts;
    opts.exponential_claim = spec.form() == ThresholdSpec::Form::Exponential;
    oj checks = oj::array();
    for (const auto& c : theorem_check(stats, bounds, ep.lambda, opts)) {
        checks.push_back({{"claim", c.claim},
                          {"pass", c.pass},
                          {"worst_ratio", c.worst_ratio},
                          {"worst_time", c.worst_time},
                          {"note", c.note}});
    }
    out["checks"] = checks;
    return out;
}

/// Shared by simulate and sweep so a single-point sweep reproduces simulate.
struct RunOutcome {
    std::optional<EnsembleResult> result;
    oj json;
};

RunOutcome run_once(const Problem& p, int threads) {
    RunOutcome o;
    try {
        o.result = run_ensemble(p.setup, ensemble_options(p, threads));
        o.json = result_json(p, *o.result);
    } catch (const AllPathsDiverged& e) {
        o.json = {{"status", "all_paths_diverged"},
                  {"paths", {{"n_paths", p.ensemble.n_paths}, {"n_diverged", p.ensemble.n_paths}}},
                  {"note", e.what()}};
    }
    return o;
}

int cmd_simulate(const Common& c, std::size_t trajectories, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const RunConfig cfg = load(c);
    const Problem p = build_problem(cfg);
    const RunOutcome run = run_once(p, c.threads);
    const fs::path dir = output_dir(cfg);

    oj summary;
    summary["command"] = "simulate";
    summary["config"] = echo_config(cfg);
    summary["result"] = run.json;
    if (run.result) {
        const auto& r = *run.result;
        write_file(dir / "stats.csv", render([&](std::ostream& os) { write_stats_csv(os, r.stats); }));
        write_file(dir / "events.csv", render([&](std::ostream& os) { write_events_csv(os, r.paths); }));
        const std::size_t k = std::min(trajectories, r.paths.size());
        if (k > 0) {
            write_file(dir / "trajectory.csv", render([&](std::ostream& os) {
                           write_trajectory_csv(os, std::span(r.paths).first(k));
                       }));
        }
    }
    write_file(dir / "summary.json", json_text(summary));

    out << "simulate: " << p.ensemble.n_paths << " paths, " << p.setup.grid.steps << " steps -> " << dir.string()
        << "\n";
    if (!run.result) {
        out << "all paths diverged\n";
        return kDiverged;
    }
    const auto& res = run.json;
    out << "  diverged: " << res["paths"]["n_diverged"] << "\n";
    out << "  mean_sq(0) = " << res["mean_sq"]["initial"] << ", mean_sq(T) = " << res["mean_sq"]["final"] << "\n";
    if (!res["fit"].is_null()) out << "  fitted rate: " << res["fit"]["rate"] << "\n";
    if (res.contains("theorem") && res["theorem"].contains("checks")) {
        for (const auto& ch : res["theorem"]["checks"]) {
            out << "  " << ch["claim"].get<std::string>() << ": " << (ch["pass"].get<bool>() ? "PASS" : "FAIL")
                << "\n";
        }
    }
    out << "  elapsed: " << seconds_since(start) << " s\n";
    return kOk;
}

int cmd_verify(const Common& c, std::optional<std::size_t> samples, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    RunConfig cfg = load(c);
    if (!cfg.lyapunov) throw UsageError("verify needs a lyapunov section with V");
    if (!cfg.verify) throw UsageError("verify needs a verify section (box and sample count)");
    if (samples) {
        cfg.verify->samples = *samples;
        if (auto errors = validate(cfg); !errors.empty()) throw ConfigError(std::move(errors));
    }
    const Problem p = build_problem(cfg);
    const AssumptionReport report = verify_assumptions(verify_inputs(p));
    const oj j = report_json(report, cfg);
    const fs::path dir = output_dir(cfg);
    write_file(dir / "report.json", json_text(j));

    out << "verify: " << report.sample_count << " samples -> " << (dir / "report.json").string() << "\n";
    out << "  certified c1 = " << report.certified_c1 << ", c2 = " << report.certified_c2
        << ", mu = " << report.certified_mu << ", c3 = " << report.certified_c3 << "\n";
    out << "  assumption1: " << (report.assumption1_pass ? "PASS" : "FAIL") << "\n";
    out << "  assumption2: " << (report.assumption2_pass ? "PASS" : "FAIL") << "\n";
    const auto& a3 = j["assumption3"];
    if (a3["applicable"].get<bool>()) {
        out << "  assumption3: " << (a3["pass"].get<bool>() ? "PASS" : "FAIL") << " ("
            << a3["detail"].get<std::string>() << ")\n";
    }
    for (const auto& v : report.violations) out << "  violation [" << v.assumption << "] " << v.message << "\n";
    out << "  overall: " << j["overall"].get<std::string>() << "\n";
    out << "  elapsed: " << seconds_since(start) << " s\n";
    return j["overall"] == "PASS" ? kOk : kVerificationFailed;
}

struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

const std::vector<std::string> kSweepParams = {"M1", "M2", "lambda", "tau", "delta", "n_paths"};

SweepAxis parse_axis(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw UsageError("--param expects name=v1,v2,...: '" + text + "'");
    SweepAxis axis;
    axis.name = text.substr(0, eq);
    if (std::find(kSweepParams.begin(), kSweepParams.end(), axis.name) == kSweepParams.end()) {
        throw UsageError("--param: unknown parameter '" + axis.name + "' (allowed: M1, M2, lambda, tau, delta, n_paths)");
    }
    std::stringstream rest(text.substr(eq + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            axis.values.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("--param " + axis.name + ": '" + item + "' is not a number");
        }
    }
    if (axis.values.empty()) throw UsageError("--param " + axis.name + ": no values");
    return axis;
}

Overrides point_overrides(const std::vector<SweepAxis>& axes, const std::vector<double>& point) {
    Overrides o;
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const auto& n = axes[i].name;
        const double v = point[i];
        if (n == "M1") o.M1 = v;
        if (n == "M2") o.M2 = v;
        if (n == "lambda") o.lambda = v;
        if (n == "tau") o.tau = v;
        if (n == "delta") o.delta = v;
        if (n == "n_paths") {
            if (!(v >= 1.0) || v != std::floor(v)) throw UsageError("--param n_paths: values must be positive integers");
            o.n_paths = static_cast<std::size_t>(v);
        }
    }
    return o;
}

std::string csv_value(const oj& v) {
    if (v.is_null()) return "";
    if (v.is_number_float()) return format_number(v.get<double>());
    return v.dump();
}

int cmd_sweep(const Common& c, const std::vector<std::string>& params, std::size_t max_points, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const RunConfig base = load(c);
    std::vector<SweepAxis> axes;
    for (const auto& p : params) {
        auto axis = parse_axis(p);
        for (const auto& a : axes) {
            if (a.name == axis.name) throw UsageError("--param " + axis.name + " given twice");
        }
        axes.push_back(std::move(axis));
    }
    if (axes.empty()) throw UsageError("sweep needs at least one --param name=v1,v2,...");
    std::size_t total = 1;
    for (const auto& a : axes) {
        total *= a.values.size();
        if (total > max_points) {
            throw UsageError("sweep grid has more than " + std::to_string(max_points) +
                             " points (raise --max-points to allow it)");
        }
    }

    const std::vector<std::string> metrics = {"n_paths",           "n_diverged",        "rate",
                                              "r_squared",         "duty_cycle",        "triggers_per_path",
                                              "min_primary_dwell", "min_secondary_dwell", "min_full_cycle",
                                              "mean_primary_dwell"};
    std::ostringstream csv;
    for (const auto& a : axes) csv << a.name << ",";
    for (std::size_t i = 0; i < metrics.size(); ++i) csv << metrics[i] << (i + 1 < metrics.size() ? "," : "\n");

    oj points = oj::array();
    std::size_t all_diverged = 0;
    std::vector<std::size_t> idx(axes.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        std::vector<double> point;
        oj parameters = oj::object();
        for (std::size_t i = 0; i < axes.size(); ++i) {
            point.push_back(axes[i].values[idx[i]]);
            parameters[axes[i].name] = point.back();
        }
        const RunConfig cfg = apply_overrides(base, point_overrides(axes, point));
        const Problem p = build_problem(cfg);
        const RunOutcome run = run_once(p, c.threads);
        if (!run.result) ++all_diverged;

        const oj& r = run.json;
        std::map<std::string, oj> row;
        row["n_paths"] = p.ensemble.n_paths;
        row["n_diverged"] = r["paths"]["n_diverged"];
        if (run.result) {
            const auto& ev = run.result->stats.events;
            row["rate"] = r["fit"].is_null() ? oj(nullptr) : r["fit"]["rate"];
            row["r_squared"] = r["fit"].is_null() ? oj(nullptr) : r["fit"]["r_squared"];
            row["duty_cycle"] = ev.duty_cycle_mean;
            row["triggers_per_path"] = ev.triggers_per_path.mean;
            auto min_of = [](const SummaryStat& s) { return s.count ? oj(s.min) : oj(nullptr); };
            row["min_primary_dwell"] = min_of(ev.primary_dwell);
            row["min_secondary_dwell"] = min_of(ev.secondary_dwell);
            row["min_full_cycle"] = min_of(ev.full_cycle);
            row["mean_primary_dwell"] = ev.primary_dwell.count ? oj(ev.primary_dwell.mean) : oj(nullptr);
        }
        for (std::size_t i = 0; i < axes.size(); ++i) csv << format_number(point[i]) << ",";
        for (std::size_t i = 0; i < metrics.size(); ++i) {
            const auto it = row.find(metrics[i]);
            csv << (it == row.end() ? std::string() : csv_value(it->second)) << (i + 1 < metrics.size() ? "," : "\n");
        }
        points.push_back({{"parameters", parameters}, {"result", r}});

        for (std::size_t i = axes.size(); i-- > 0;) {
            if (++idx[i] < axes[i].values.size()) break;
            idx[i] = 0;
        }
    }

    oj columns = oj::array();
    for (const auto& a : axes) columns.push_back(a.name);
    for (const auto& m : metrics) columns.push_back(m);
    oj summary;
    summary["command"] = "sweep";
    summary["config"] = echo_config(base);
    summary["sweep_columns"] = columns;
    summary["points"] = points;
    const fs::path dir = output_dir(base);
    write_file(dir / "sweep.csv", csv.str());
    write_file(dir / "summary.json", json_text(summary));

    out << "sweep: " << total << " grid points -> " << (dir / "sweep.csv").string() << "\n";
    out << "  elapsed: " << seconds_since(start) << " s\n";
    return all_diverged == total ? kDiverged : kOk;
}

int cmd_compare(const Common& c, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const RunConfig controlled_cfg = load(c);
    Overrides off;
    off.uncontrolled = true;
    const RunConfig uncontrolled_cfg = apply_overrides(controlled_cfg, off);
    const Problem pc = build_problem(controlled_cfg);
    const Problem pu = build_problem(uncontrolled_cfg);
    const RunOutcome rc = run_once(pc, c.threads);
    const RunOutcome ru = run_once(pu, c.threads);

    auto rate_of = [](const RunOutcome& r) -> std::optional<double> {
        if (!r.result || r.json["fit"].is_null()) return std::nullopt;
        return r.json["fit"]["rate"].get<double>();
    };
    const auto rate_c = rate_of(rc);
    const auto rate_u = rate_of(ru);
    // A fitted slope of -1e-33 on a constant run is not decay.
    const bool controlled_decays = rate_c && *rate_c < 0.0 && rc.result->stats.mean_sq.back() < rc.result->stats.mean_sq.front();
    bool uncontrolled_unstable = !ru.result;
    if (ru.result) {
        const auto& s = ru.result->stats;
        const double frac = static_cast<double>(s.n_diverged) / static_cast<double>(s.n_paths);
        // Without control the run must decay at least half as fast to count as stable.
        const bool slow = controlled_decays && (!rate_u || *rate_u > 0.5 * *rate_c);
        uncontrolled_unstable = frac >= 0.3 || s.mean_sq.back() > s.mean_sq.front() || slow;
    }
    std::string verdict;
    if (!controlled_decays) {
        verdict = "controlled run does not decay";
    } else if (uncontrolled_unstable) {
        verdict = "controlled decays, uncontrolled unstable";
    } else {
        verdict = "uncontrolled already stable";
    }

    const fs::path dir = output_dir(controlled_cfg);
    if (rc.result || ru.result) {
        write_file(dir / "compare_stats.csv", render([&](std::ostream& os) {
                       os << "t,controlled_mean_sq,controlled_stderr,uncontrolled_mean_sq,uncontrolled_stderr\n";
                       const TimeGrid& g = pc.setup.grid;
                       for (std::size_t k = 0; k <= g.steps; ++k) {
                           os << format_number(g.time(k));
                           for (const auto* r : {&rc.result, &ru.result}) {
                               if (*r) {
                                   os << "," << format_number((*r)->stats.mean_sq[k]) << ","
                                      << format_number((*r)->stats.std_error[k]);
                               } else {
                                   os << ",,";
                               }
                           }
                           os << "\n";
                       }
                   }));
    }
    oj summary;
    summary["command"] = "compare";
    summary["config"] = echo_config(controlled_cfg);
    summary["controlled"] = rc.json;
    summary["uncontrolled"] = ru.json;
    summary["verdict"] = {{"controlled_decays", controlled_decays},
                          {"uncontrolled_unstable", uncontrolled_unstable},
                          {"controlled_rate", rate_c ? oj(*rate_c) : oj(nullptr)},
                          {"uncontrolled_rate", rate_u ? oj(*rate_u) : oj(nullptr)},
                          {"text", verdict}};
    write_file(dir / "summary.json", json_text(summary));

    out << "compare: " << verdict << " -> " << dir.string() << "\n";
    out << "  elapsed: " << seconds_since(start) << " s\n";
    return rc.result ? kOk : kDiverged;
}

int cmd_signal(double m1, double m2, double tau, double dt, double horizon, const std::string& out_dir,
               std::ostream& out) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw UsageError("signal: --dt and --T must be positive");
    if (!(m2 <= m1)) throw UsageError("signal: M2 must not exceed M1");
    const double e = std::exp(1.0);
    const TimeFunction signal = [e](double t) { return t == 0.0 ? 3.0 * e + 2.0 : e * std::sin(3.0 * t) / t + 2.0; };
    auto spec = std::make_shared<const ThresholdSpec>(
        ThresholdSpec::generic([m1](double) { return m1; }, [m2](double) { return m2; }));
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const EventLog log = trigger_on_signal(signal, 0.0, dt, steps, spec, tau);

    const fs::path dir = out_dir.empty() ? fs::path("out") : fs::path(out_dir);
    write_file(dir / "signal.csv", render([&](std::ostream& os) {
                   os << "t,x,h1,h2\n";
                   for (std::size_t k = 0; k <= steps; ++k) {
                       const double t = static_cast<double>(k) * dt;
                       os << format_number(t) << "," << format_number(signal(t)) << "," << format_number(m1) << ","
                          << format_number(m2) << "\n";
                   }
               }));
    write_file(dir / "events.csv", render([&](std::ostream& os) {
                   os << "time,kind\n";
                   for (const auto& ev : log) os << format_number(ev.time) << "," << to_string(ev.kind) << "\n";
               }));
    out << "signal: " << log.size() << " events -> " << dir.string() << "\n";
    for (const auto& ev : log) out << "  t = " << ev.time << "  " << to_string(ev.kind) << "\n";
    return kOk;
}

}  // namespace

void write_stats_csv(std::ostream& os, const EnsembleStats& stats) {
    os << "t,mean_sq,stderr\n";
    for (std::size_t k = 0; k < stats.mean_sq.size(); ++k) {
        os << format_number(stats.time(k)) << "," << format_number(stats.mean_sq[k]) << ","
           << format_number(stats.std_error[k]) << "\n";
    }
}

void write_events_csv(std::ostream& os, const std::vector<PathRecord>& paths) {
    os << "path,time,kind\n";
    for (std::size_t j = 0; j < paths.size(); ++j) {
        for (const auto& e : paths[j].events) os << j << "," << format_number(e.time) << "," << to_string(e.kind) << "\n";
    }
}

void write_trajectory_csv(std::ostream& os, std::span<const PathRecord> paths) {
    if (paths.empty()) return;
    os << "path,t";
    for (const auto& n : state_names(paths[0].dim_state)) os << "," << n;
    for (const auto& n : control_names(paths[0].dim_control)) os << "," << n;
    os << ",mode\n";
    for (std::size_t j = 0; j < paths.size(); ++j) {
        const PathRecord& path = paths[j];
        // The final state has no control applied after it.
        const std::size_t rows = path.num_states();
        for (std::size_t k = 0; k < rows; ++k) {
            const bool has_control = k + 1 < rows || path.diverged;
            os << j << "," << format_number(path.grid.time(k));
            for (double v : path.state(k)) os << "," << format_number(v);
            for (std::size_t i = 0; i < path.dim_control; ++i) {
                os << ",";
                if (has_control && (k + 1) * path.dim_control <= path.controls.size()) {
                    os << format_number(path.control(k)[i]);
                }
            }
            os << "," << (k + 1 < rows ? to_string(path.mode_at(k)) : "") << "\n";
        }
    }
}

oj result_json(const Problem& problem, const EnsembleResult& result) {
    const auto& s = result.stats;
    oj j;
    j["status"] = "ok";
    j["paths"] = {{"n_paths", s.n_paths}, {"n_diverged", s.n_diverged}, {"n_used", s.n_paths - s.n_diverged}};
    j["mean_sq"] = {{"initial", s.mean_sq.front()},
                    {"final", s.mean_sq.back()},
                    {"max", *std::max_element(s.mean_sq.begin(), s.mean_sq.end())}};
    try {
        j["fit"] = fit_json(fit_decay(s));
    } catch (const InsufficientData& e) {
        j["fit"] = nullptr;
        j["fit_note"] = e.what();
    }
    const auto& ev = s.events;
    j["events"] = {{"triggers_per_path", stat_json(ev.triggers_per_path)},
                   {"primary_dwell", stat_json(ev.primary_dwell)},
                   {"secondary_dwell", stat_json(ev.secondary_dwell)},
                   {"full_cycle", stat_json(ev.full_cycle)},
                   {"duty_cycle_mean", ev.duty_cycle_mean}};
    j["tau"] = problem.setup.trigger.tau;
    std::size_t trigger_bad = 0;
    std::size_t control_bad = 0;
    std::size_t clamped = 0;
    for (const auto& p : result.paths) {
        clamped += p.clamp_count;
        if (p.diverged) continue;
        trigger_bad += replay_trigger_consistency(p, problem.setup.trigger).size();
        control_bad += replay_controls(p, problem.setup.controller).size();
    }
    j["replay"] = {{"trigger_violations", trigger_bad}, {"control_mismatches", control_bad}};
    j["clamped_steps"] = clamped;
    j["warnings"] = s.warning_count;
    j["theorem"] = theorem_json(problem, s);
    return j;
}

oj report_json(const AssumptionReport& r, const RunConfig& cfg) {
    oj j;
    j["command"] = "verify";
    oj box = oj::array();
    for (std::size_t i = 0; i < r.box.dim(); ++i) box.push_back({r.box.lower[i], r.box.upper[i]});
    j["box"] = box;
    j["sample_count"] = r.sample_count;
    j["certified"] = {{"c1", r.certified_c1}, {"c2", r.certified_c2}, {"mu", r.certified_mu}, {"c3", r.certified_c3}};
    oj claims = oj::object();
    if (cfg.verify) {
        const auto& c = cfg.verify->claims;
        if (c.c1) claims["c1"] = *c.c1;
        if (c.c2) claims["c2"] = *c.c2;
        if (c.mu) claims["mu"] = *c.mu;
        if (c.c3) claims["c3"] = *c.c3;
    }
    j["claimed"] = claims;
    j["effective"] = {{"c1", r.c1}, {"c2", r.c2}, {"mu", r.mu}, {"M_bar", r.M_bar}, {"c3", r.c3}};
    j["effective"]["lambda_bar"] = r.lambda_bar ? oj(*r.lambda_bar) : oj(nullptr);
    j["lambda_max_admissible"] = r.lambda_max_admissible;
    j["assumption1"] = {{"pass", r.assumption1_pass}};
    j["assumption2"] = {{"pass", r.assumption2_pass}};
    bool a3_pass = true;
    if (cfg.trigger.is_exponential()) {
        const auto rate = check_rate_admissibility(r, cfg.trigger.lambda);
        a3_pass = rate.pass;
        j["assumption3"] = {{"applicable", true}, {"lambda", cfg.trigger.lambda}, {"pass", rate.pass},
                            {"detail", rate.detail}};
    } else {
        j["assumption3"] = {{"applicable", false}, {"detail", "thresholds are not exponential"}};
    }
    oj violations = oj::array();
    for (const auto& v : r.violations) {
        violations.push_back({{"assumption", v.assumption}, {"message", v.message}, {"point", v.point}});
    }
    j["violations"] = violations;
    j["overall"] = r.assumption1_pass && r.assumption2_pass && a3_pass ? "PASS" : "FAIL";
    return j;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Double event-triggered switching control of stochastic systems"};
    app.name("detm-sim");
    app.require_subcommand(1);

    Common common;
    std::size_t trajectories = 1;
    std::optional<std::size_t> samples;
    std::vector<std::string> params;
    std::size_t max_points = 256;

    auto* sim = app.add_subcommand("simulate", "Monte Carlo ensemble: stats.csv, events.csv, summary.json");
    add_source_options(*sim, common);
    add_run_overrides(*sim, common);
    add_threshold_overrides(*sim, common);
    sim->add_option("--trajectories", trajectories, "paths written to trajectory.csv")->capture_default_str();

    auto* ver = app.add_subcommand("verify", "sampled certification of the Lyapunov assumptions: report.json");
    add_source_options(*ver, common);
    add_threshold_overrides(*ver, common);
    ver->add_option("--samples", samples, "Halton samples in the verify box")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "cartesian parameter sweep: sweep.csv, summary.json");
    add_source_options(*sweep, common);
    add_run_overrides(*sweep, common);
    add_threshold_overrides(*sweep, common);
    sweep->add_option("--param", params, "name=v1,v2,... for M1, M2, lambda, tau, delta, n_paths")->required();
    sweep->add_option("--max-points", max_points, "cap on the number of grid points")->capture_default_str();

    auto* cmp = app.add_subcommand("compare", "controlled vs uncontrolled with the same seeds");
    add_source_options(*cmp, common);
    add_run_overrides(*cmp, common);
    add_threshold_overrides(*cmp, common);

    auto* presets = app.add_subcommand("presets", "built-in models");
    presets->require_subcommand(1);
    presets->add_subcommand("list", "names of the built-in models");
    std::string dump_name;
    auto* dump = presets->add_subcommand("dump", "print the JSON document of a built-in model");
    dump->add_option("name", dump_name, "preset name")->required();

    double sig_m1 = 4.0;
    double sig_m2 = 1.5;
    double sig_tau = 0.0;
    double sig_dt = 0.01;
    double sig_T = 10.0;
    std::string sig_out;
    auto* sig = app.add_subcommand("signal", "trigger demo on x(t) = e sin(3t)/t + 2 with constant thresholds");
    sig->add_option("--M1", sig_m1, "upper threshold")->capture_default_str();
    sig->add_option("--M2", sig_m2, "lower threshold")->capture_default_str();
    sig->add_option("--tau", sig_tau, "dwell time")->capture_default_str();
    sig->add_option("--dt", sig_dt, "sampling step")->capture_default_str();
    sig->add_option("--T", sig_T, "horizon")->capture_default_str();
    sig->add_option("--out", sig_out, "output directory (default ./out)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*sim) return cmd_simulate(common, trajectories, out);
        if (*ver) return cmd_verify(common, samples, out);
        if (*sweep) return cmd_sweep(common, params, max_points, out);
        if (*cmp) return cmd_compare(common, out);
        if (*sig) return cmd_signal(sig_m1, sig_m2, sig_tau, sig_dt, sig_T, sig_out, out);
        if (*presets) {
            if (*dump) {
                const std::string* text = find_preset_text(dump_name);
                if (text == nullptr) throw UsageError("unknown preset '" + dump_name + "'");
                out << *text;
                return kOk;
            }
            for (const auto& name : preset_names()) out << name << "\t" << find_preset(name)->description << "\n";
            return kOk;
        }
    } catch (const ConfigError& e) {
        err << "detm-sim: " << e.what() << "\n";
        return kUsageError;
    } catch (const UsageError& e) {
        err << "detm-sim: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        err << "detm-sim: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "detm-sim: error: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}

}  // namespace detm::cli
