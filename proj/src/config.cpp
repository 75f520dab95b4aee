#include "detm/config.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "detm/expr.hpp"
#include "detm/models.hpp"

namespace detm {

using nlohmann::json;

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& e : errors) msg += "\n  " + e;
          return msg;
      }()),
      errors_(std::move(errors)) {}

std::vector<std::string> state_names(std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 1; i <= n; ++i) v.push_back("x" + std::to_string(i));
    return v;
}

std::vector<std::string> control_names(std::size_t l) {
    std::vector<std::string> v;
    for (std::size_t i = 1; i <= l; ++i) v.push_back("u" + std::to_string(i));
    return v;
}

namespace {

// Reads typed fields from one JSON object, recording every problem instead
// of stopping at the first.
class Reader {
public:
    Reader(const json& obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (!obj_.is_object()) {
            errors_.push_back(path_ + ": expected an object");
            ok_ = false;
        }
    }

    bool ok() const { return ok_; }

    void only(std::initializer_list<std::string_view> allowed) {
        if (!ok_) return;
        for (const auto& [key, _] : obj_.items()) {
            bool known = false;
            for (auto a : allowed) known = known || a == key;
            if (!known) errors_.push_back(path_ + ": unknown key '" + key + "'");
        }
    }

    bool has(const std::string& key) const { return ok_ && obj_.contains(key) && !obj_.at(key).is_null(); }
    const json& at(const std::string& key) const { return obj_.at(key); }
    std::string field(const std::string& key) const { return path_ + "." + key; }

    std::optional<double> number(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        const json& v = obj_.at(key);
        if (!v.is_number()) return type_error(key, "a number"), std::nullopt;
        return v.get<double>();
    }

    std::optional<std::uint64_t> unsigned_int(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        const json& v = obj_.at(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        return type_error(key, "a non-negative integer"), std::nullopt;
    }

    std::optional<std::string> string(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        const json& v = obj_.at(key);
        if (!v.is_string()) return type_error(key, "a string"), std::nullopt;
        return v.get<std::string>();
    }

    std::optional<std::vector<std::string>> strings(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        return string_list(obj_.at(key), field(key));
    }

    std::optional<std::vector<std::vector<std::string>>> string_matrix(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        const json& v = obj_.at(key);
        if (!v.is_array()) return type_error(key, "an array of arrays of strings"), std::nullopt;
        std::vector<std::vector<std::string>> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto row = string_list(v[i], field(key) + "[" + std::to_string(i) + "]");
            if (!row) return std::nullopt;
            out.push_back(std::move(*row));
        }
        return out;
    }

    std::optional<Vector> numbers(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        return number_list(obj_.at(key), field(key));
    }

    std::optional<std::vector<std::pair<double, double>>> pairs(const std::string& key, bool required) {
        if (!present(key, required)) return std::nullopt;
        return pair_list(obj_.at(key), field(key));
    }

    std::optional<std::vector<std::string>> string_list(const json& v, const std::string& where) {
        if (!v.is_array()) return errors_.push_back(where + ": expected an array of strings"), std::nullopt;
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) return errors_.push_back(where + ": expected an array of strings"), std::nullopt;
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    std::optional<Vector> number_list(const json& v, const std::string& where) {
        if (!v.is_array()) return errors_.push_back(where + ": expected an array of numbers"), std::nullopt;
        Vector out;
        for (const auto& e : v) {
            if (!e.is_number()) return errors_.push_back(where + ": expected an array of numbers"), std::nullopt;
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::optional<std::vector<std::pair<double, double>>> pair_list(const json& v, const std::string& where) {
        const std::string expect = where + ": expected an array of [number, number] pairs";
        if (!v.is_array()) return errors_.push_back(expect), std::nullopt;
        std::vector<std::pair<double, double>> out;
        for (const auto& e : v) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
                return errors_.push_back(expect), std::nullopt;
            }
            out.emplace_back(e[0].get<double>(), e[1].get<double>());
        }
        return out;
    }

private:
    bool present(const std::string& key, bool required) {
        if (!ok_) return false;
        if (obj_.contains(key) && !obj_.at(key).is_null()) return true;
        if (required) errors_.push_back(field(key) + ": required field missing");
        return false;
    }

    void type_error(const std::string& key, const char* expected) {
        errors_.push_back(field(key) + ": expected " + expected);
    }

    const json& obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    bool ok_ = true;
};

SystemSection read_system(const json& j, std::vector<std::string>& errors) {
    SystemSection s;
    if (j.is_object() && j.contains("preset")) {
        Reader r(j, "system", errors);
        r.only({"preset"});
        if (auto name = r.string("preset", true)) {
            if (const auto* text = find_preset_text(*name)) {
                return parse_config_text(*text).system;
            }
            errors.push_back("system.preset: unknown preset '" + *name + "'");
        }
        return s;
    }
    Reader r(j, "system", errors);
    r.only({"label", "dim_state", "dim_noise", "dim_control", "drift", "diffusion"});
    s.label = r.string("label", false).value_or("");
    s.dim_state = r.unsigned_int("dim_state", true).value_or(0);
    s.dim_noise = r.unsigned_int("dim_noise", true).value_or(0);
    s.dim_control = r.unsigned_int("dim_control", false).value_or(0);
    s.drift = r.strings("drift", true).value_or(std::vector<std::string>{});
    s.diffusion = r.string_matrix("diffusion", true).value_or(std::vector<std::vector<std::string>>{});
    return s;
}

ControllerSection read_controller(const json& j, std::vector<std::string>& errors) {
    ControllerSection c;
    Reader r(j, "controller", errors);
    r.only({"label", "k1", "k2", "clamp"});
    c.label = r.string("label", false).value_or("");
    c.k1 = r.strings("k1", true).value_or(std::vector<std::string>{});
    c.k2 = r.strings("k2", true).value_or(std::vector<std::string>{});
    if (r.has("clamp")) {
        Reader cr(r.at("clamp"), "controller.clamp", errors);
        cr.only({"lower", "upper"});
        ClampSection box;
        box.lower = cr.numbers("lower", true).value_or(Vector{});
        box.upper = cr.numbers("upper", true).value_or(Vector{});
        c.clamp = std::move(box);
    }
    return c;
}

std::optional<DeltaSection> read_delta(const json& v, std::vector<std::string>& errors) {
    if (v.is_number()) return v.get<double>();
    Reader r(v, "trigger.delta", errors);
    if (!r.ok()) return std::nullopt;
    r.only({"expression", "table"});
    if (r.has("expression") == r.has("table")) {
        errors.push_back("trigger.delta: give exactly one of 'expression' or 'table'");
        return std::nullopt;
    }
    if (r.has("expression")) {
        if (auto e = r.string("expression", true)) return *e;
        return std::nullopt;
    }
    if (auto t = r.pairs("table", true)) return DeltaTable{std::move(*t)};
    return std::nullopt;
}

TriggerSection read_trigger(const json& j, std::vector<std::string>& errors) {
    TriggerSection t;
    Reader r(j, "trigger", errors);
    r.only({"form", "M1", "M2", "lambda", "h1", "h2", "tau", "delta", "watchdog_fraction"});
    t.form = r.string("form", true).value_or("");
    const bool generic = t.form == "generic";
    t.M1 = r.number("M1", !generic).value_or(0.0);
    t.M2 = r.number("M2", !generic).value_or(0.0);
    t.lambda = r.number("lambda", !generic).value_or(0.0);
    t.h1 = r.string("h1", generic).value_or("");
    t.h2 = r.string("h2", generic).value_or("");
    t.tau = r.number("tau", true).value_or(0.0);
    if (r.has("delta")) t.delta = read_delta(r.at("delta"), errors);
    t.watchdog_fraction = r.number("watchdog_fraction", false).value_or(0.8);
    return t;
}

VerifySection read_verify(const json& j, std::vector<std::string>& errors) {
    VerifySection v;
    Reader r(j, "verify", errors);
    r.only({"box", "samples", "axis_points", "M_bar", "lambda_bar", "t_max", "gamma", "claims"});
    v.box = r.pairs("box", true).value_or(std::vector<std::pair<double, double>>{});
    v.samples = r.unsigned_int("samples", false).value_or(100000);
    v.axis_points = r.unsigned_int("axis_points", false).value_or(64);
    v.M_bar = r.number("M_bar", false).value_or(0.0);
    v.lambda_bar = r.number("lambda_bar", false);
    v.t_max = r.number("t_max", false).value_or(0.0);
    v.gamma = r.number("gamma", false);
    if (r.has("claims")) {
        Reader cr(r.at("claims"), "verify.claims", errors);
        cr.only({"c1", "c2", "mu", "c3"});
        v.claims.c1 = cr.number("c1", false);
        v.claims.c2 = cr.number("c2", false);
        v.claims.mu = cr.number("mu", false);
        v.claims.c3 = cr.number("c3", false);
    }
    return v;
}

void check_expression(const std::string& source, const std::string& where, const std::set<std::string>& allowed,
                      std::vector<std::string>& errors) {
    try {
        const auto e = expr::Expression::parse(source);
        for (const auto& name : e.free_vars()) {
            if (!allowed.contains(name)) {
                errors.push_back(where + ": variable '" + name + "' is not available here");
            }
        }
    } catch (const expr::ParseError& err) {
        errors.push_back(where + ": " + err.what());
    }
}

std::set<std::string> name_set(std::initializer_list<std::vector<std::string>> groups,
                               std::initializer_list<std::string> extra = {}) {
    std::set<std::string> s(extra);
    for (const auto& g : groups) s.insert(g.begin(), g.end());
    return s;
}

bool finite(double v) { return std::isfinite(v); }

std::optional<DeltaFunction> make_delta(const DeltaSection& d) {
    if (const auto* c = std::get_if<double>(&d)) return DeltaFunction::constant(*c);
    if (const auto* e = std::get_if<std::string>(&d)) return DeltaFunction::expression(expr::Expression::parse(*e));
    return DeltaFunction::table(std::get<DeltaTable>(d).breakpoints);
}

void validate_delta(const RunConfig& cfg, std::vector<std::string>& errors) {
    const auto& d = *cfg.trigger.delta;
    if (const auto* c = std::get_if<double>(&d)) {
        if (!(*c > 0.0) || !finite(*c)) errors.push_back("trigger.delta: must be positive");
        return;
    }
    if (const auto* e = std::get_if<std::string>(&d)) {
        const std::size_t before = errors.size();
        check_expression(*e, "trigger.delta.expression", {"t"}, errors);
        if (errors.size() != before) return;
        const auto fn = make_delta(d);
        const auto& g = cfg.grid;
        if (!(g.dt > 0.0) || g.steps == 0) return;
        for (std::size_t k = 0; k <= g.steps; ++k) {
            const double t = g.t0 + static_cast<double>(k) * g.dt;
            double v = 0.0;
            try {
                v = (*fn)(t);
            } catch (const expr::EvalError& err) {
                errors.push_back("trigger.delta.expression: " + std::string(err.what()) + " at t=" + std::to_string(t));
                return;
            }
            if (!(v > 0.0) || !finite(v)) {
                errors.push_back("trigger.delta.expression: must be positive on the grid, got " + std::to_string(v) +
                                 " at t=" + std::to_string(t));
                return;
            }
        }
        return;
    }
    const auto& table = std::get<DeltaTable>(d).breakpoints;
    if (table.empty()) errors.push_back("trigger.delta.table: must not be empty");
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (!(table[i].second > 0.0) || !finite(table[i].second)) {
            errors.push_back("trigger.delta.table[" + std::to_string(i) + "]: value must be positive");
        }
        if (i > 0 && !(table[i].first > table[i - 1].first)) {
            errors.push_back("trigger.delta.table[" + std::to_string(i) + "]: times must be strictly increasing");
        }
    }
}

}  // namespace

std::vector<std::string> validate(const RunConfig& cfg) {
    std::vector<std::string> errors;
    const auto& sys = cfg.system;
    const std::size_t n = sys.dim_state;
    const std::size_t m = sys.dim_noise;
    const std::size_t l = sys.dim_control;
    const auto xs = state_names(n);
    const auto us = control_names(l);

    if (n == 0) errors.push_back("system.dim_state: must be at least 1");
    if (m == 0) errors.push_back("system.dim_noise: must be at least 1");
    if (sys.drift.size() != n) {
        errors.push_back("system.drift: expected " + std::to_string(n) + " expressions, got " +
                         std::to_string(sys.drift.size()));
    }
    const auto drift_vars = name_set({xs, us}, {"t"});
    for (std::size_t i = 0; i < sys.drift.size(); ++i) {
        check_expression(sys.drift[i], "system.drift[" + std::to_string(i) + "]", drift_vars, errors);
    }
    if (sys.diffusion.size() != n) {
        errors.push_back("system.diffusion: expected " + std::to_string(n) + " rows, got " +
                         std::to_string(sys.diffusion.size()));
    }
    const auto diffusion_vars = name_set({xs}, {"t"});
    for (std::size_t i = 0; i < sys.diffusion.size(); ++i) {
        const std::string where = "system.diffusion[" + std::to_string(i) + "]";
        if (sys.diffusion[i].size() != m) {
            errors.push_back(where + ": expected " + std::to_string(m) + " columns, got " +
                             std::to_string(sys.diffusion[i].size()));
        }
        for (std::size_t j = 0; j < sys.diffusion[i].size(); ++j) {
            check_expression(sys.diffusion[i][j], where + "[" + std::to_string(j) + "]", diffusion_vars, errors);
        }
    }

    const auto state_vars = name_set({xs});
    const auto& ctl = cfg.controller;
    for (const auto* which : {"k1", "k2"}) {
        const auto& maps = std::string_view(which) == "k1" ? ctl.k1 : ctl.k2;
        const std::string where = std::string("controller.") + which;
        if (maps.size() != l) {
            errors.push_back(where + ": expected " + std::to_string(l) + " expressions (dim_control), got " +
                             std::to_string(maps.size()));
        }
        for (std::size_t i = 0; i < maps.size(); ++i) {
            check_expression(maps[i], where + "[" + std::to_string(i) + "]", state_vars, errors);
        }
    }
    if (ctl.clamp) {
        if (ctl.clamp->lower.size() != l || ctl.clamp->upper.size() != l) {
            errors.push_back("controller.clamp: lower and upper need " + std::to_string(l) + " entries");
        } else {
            for (std::size_t i = 0; i < l; ++i) {
                if (!(ctl.clamp->lower[i] <= ctl.clamp->upper[i])) {
                    errors.push_back("controller.clamp: lower[" + std::to_string(i) + "] exceeds upper");
                }
            }
        }
    }

    const auto& tr = cfg.trigger;
    if (tr.form != "exponential" && tr.form != "exponential_plus_delta" && tr.form != "generic") {
        errors.push_back("trigger.form: must be one of exponential, exponential_plus_delta, generic");
    }
    if (!(tr.tau >= 0.0) || !finite(tr.tau)) errors.push_back("trigger.tau: must be >= 0");
    if (!(tr.watchdog_fraction > 0.0 && tr.watchdog_fraction <= 1.0)) {
        errors.push_back("trigger.watchdog_fraction: must lie in (0, 1]");
    }
    if (tr.is_exponential()) {
        if (!(tr.M2 > 0.0) || !finite(tr.M2)) errors.push_back("trigger.M2: must be > 0");
        if (!(tr.M1 > 0.0) || !finite(tr.M1)) errors.push_back("trigger.M1: must be > 0");
        if (!(tr.lambda > 0.0) || !finite(tr.lambda)) errors.push_back("trigger.lambda: must be > 0");
    }
    if (tr.form == "exponential") {
        if (tr.delta) errors.push_back("trigger.delta: not allowed with form 'exponential'");
        if (!(tr.M2 <= tr.M1)) errors.push_back("trigger.M2: must not exceed M1");
    } else if (tr.form == "exponential_plus_delta") {
        if (!tr.delta) errors.push_back("trigger.delta: required with form 'exponential_plus_delta'");
    } else if (tr.form == "generic") {
        if (tr.h1.empty()) errors.push_back("trigger.h1: required with form 'generic'");
        if (tr.h2.empty()) errors.push_back("trigger.h2: required with form 'generic'");
        if (!tr.h1.empty()) check_expression(tr.h1, "trigger.h1", {"t"}, errors);
        if (!tr.h2.empty()) check_expression(tr.h2, "trigger.h2", {"t"}, errors);
    }
    if (tr.delta) {
        const std::size_t before = errors.size();
        validate_delta(cfg, errors);
        if (errors.size() == before && tr.form == "exponential_plus_delta") {
            const double d0 = (*make_delta(*tr.delta))(0.0);
            if (!(tr.M2 <= tr.M1 + d0)) errors.push_back("trigger.M2: must not exceed M1 + delta(0)");
        }
    }

    const auto& g = cfg.grid;
    if (!(g.dt > 0.0) || !finite(g.dt)) errors.push_back("grid.dt: must be > 0");
    if (!finite(g.t0)) errors.push_back("grid.t0: must be finite");
    if (g.steps == 0) errors.push_back("grid.steps: must be at least 1");

    if (cfg.ensemble.n_paths == 0) errors.push_back("ensemble.n_paths: must be at least 1");

    if (cfg.x0.size() != n) {
        errors.push_back("x0: expected " + std::to_string(n) + " entries, got " + std::to_string(cfg.x0.size()));
    }
    for (double v : cfg.x0) {
        if (!finite(v)) {
            errors.push_back("x0: entries must be finite");
            break;
        }
    }

    if (cfg.lyapunov) {
        const auto& ly = *cfg.lyapunov;
        if (ly.V.empty()) {
            errors.push_back("lyapunov.V: required");
        } else {
            check_expression(ly.V, "lyapunov.V", state_vars, errors);
        }
        if (ly.grad) {
            if (ly.grad->size() != n) errors.push_back("lyapunov.grad: expected " + std::to_string(n) + " entries");
            for (std::size_t i = 0; i < ly.grad->size(); ++i) {
                check_expression((*ly.grad)[i], "lyapunov.grad[" + std::to_string(i) + "]", state_vars, errors);
            }
        }
        if (ly.hess) {
            if (ly.hess->size() != n) errors.push_back("lyapunov.hess: expected " + std::to_string(n) + " rows");
            for (std::size_t i = 0; i < ly.hess->size(); ++i) {
                const auto& row = (*ly.hess)[i];
                if (row.size() != n) {
                    errors.push_back("lyapunov.hess[" + std::to_string(i) + "]: expected " + std::to_string(n) +
                                     " entries");
                }
                for (std::size_t j = 0; j < row.size(); ++j) {
                    check_expression(row[j], "lyapunov.hess[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                                     state_vars, errors);
                }
            }
        }
    }

    if (cfg.verify) {
        const auto& v = *cfg.verify;
        if (v.box.size() != n) {
            errors.push_back("verify.box: expected " + std::to_string(n) + " [lower, upper] pairs");
        }
        for (std::size_t i = 0; i < v.box.size(); ++i) {
            if (!(v.box[i].first < v.box[i].second)) {
                errors.push_back("verify.box[" + std::to_string(i) + "]: lower must be below upper");
            }
        }
        if (v.samples == 0) errors.push_back("verify.samples: must be at least 1");
        if (!(v.M_bar >= 0.0)) errors.push_back("verify.M_bar: must be >= 0");
        if (v.M_bar > 0.0 && !v.lambda_bar) errors.push_back("verify.lambda_bar: required when M_bar > 0");
        if (v.M_bar > 0.0 && !v.claims.mu) errors.push_back("verify.claims.mu: required when M_bar > 0");
        if (!(v.t_max >= 0.0)) errors.push_back("verify.t_max: must be >= 0");
        if (v.claims.c1 && !(*v.claims.c1 > 0.0)) errors.push_back("verify.claims.c1: must be > 0");
        if (v.claims.c2 && !(*v.claims.c2 > 0.0)) errors.push_back("verify.claims.c2: must be > 0");
        if (v.claims.mu && !(*v.claims.mu > 0.0)) errors.push_back("verify.claims.mu: must be > 0");
        if (!cfg.lyapunov) errors.push_back("verify: needs a lyapunov section");
    }

    if (cfg.output && cfg.output->dir.empty()) errors.push_back("output.dir: must not be empty");
    return errors;
}

RunConfig parse_config(const json& doc) {
    std::vector<std::string> errors;
    RunConfig cfg;
    Reader top(doc, "config", errors);
    if (!top.ok()) throw ConfigError(std::move(errors));
    top.only({"system", "controller", "lyapunov", "trigger", "grid", "ensemble", "x0", "verify", "output"});

    for (const char* key : {"system", "controller", "trigger", "grid", "ensemble", "x0"}) {
        if (!top.has(key)) errors.push_back(std::string(key) + ": required section missing");
    }
    if (top.has("system")) cfg.system = read_system(doc.at("system"), errors);
    if (top.has("controller")) cfg.controller = read_controller(doc.at("controller"), errors);
    if (top.has("trigger")) cfg.trigger = read_trigger(doc.at("trigger"), errors);
    if (top.has("grid")) {
        Reader r(doc.at("grid"), "grid", errors);
        r.only({"t0", "dt", "steps"});
        cfg.grid.t0 = r.number("t0", false).value_or(0.0);
        cfg.grid.dt = r.number("dt", true).value_or(0.0);
        cfg.grid.steps = r.unsigned_int("steps", true).value_or(0);
    }
    if (top.has("ensemble")) {
        Reader r(doc.at("ensemble"), "ensemble", errors);
        r.only({"n_paths", "seed"});
        cfg.ensemble.n_paths = r.unsigned_int("n_paths", true).value_or(0);
        cfg.ensemble.seed = r.unsigned_int("seed", false).value_or(0);
    }
    if (top.has("x0")) cfg.x0 = top.number_list(doc.at("x0"), "x0").value_or(Vector{});
    if (top.has("lyapunov")) {
        Reader r(doc.at("lyapunov"), "lyapunov", errors);
        r.only({"V", "grad", "hess"});
        LyapunovSection ly;
        ly.V = r.string("V", true).value_or("");
        ly.grad = r.strings("grad", false);
        ly.hess = r.string_matrix("hess", false);
        cfg.lyapunov = std::move(ly);
    }
    if (top.has("verify")) cfg.verify = read_verify(doc.at("verify"), errors);
    if (top.has("output")) {
        Reader r(doc.at("output"), "output", errors);
        r.only({"dir"});
        cfg.output = OutputSection{r.string("dir", false).value_or("out")};
    }

    // Semantic checks only make sense once the shape is right.
    if (errors.empty()) errors = validate(cfg);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

RunConfig parse_config_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("JSON ") + e.what()});
    }
    return parse_config(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError({"cannot open config file '" + path.string() + "'"});
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
    using oj = nlohmann::ordered_json;
    oj out;
    const auto& s = cfg.system;
    out["system"] = {{"label", s.label},       {"dim_state", s.dim_state}, {"dim_noise", s.dim_noise},
                     {"dim_control", s.dim_control}, {"drift", s.drift},     {"diffusion", s.diffusion}};
    oj ctl = {{"label", cfg.controller.label}, {"k1", cfg.controller.k1}, {"k2", cfg.controller.k2}};
    if (cfg.controller.clamp) {
        ctl["clamp"] = {{"lower", cfg.controller.clamp->lower}, {"upper", cfg.controller.clamp->upper}};
    }
    out["controller"] = ctl;
    if (cfg.lyapunov) {
        oj ly = {{"V", cfg.lyapunov->V}};
        if (cfg.lyapunov->grad) ly["grad"] = *cfg.lyapunov->grad;
        if (cfg.lyapunov->hess) ly["hess"] = *cfg.lyapunov->hess;
        out["lyapunov"] = ly;
    }
    const auto& t = cfg.trigger;
    oj tr = {{"form", t.form}};
    if (t.is_exponential()) {
        tr["M1"] = t.M1;
        tr["M2"] = t.M2;
        tr["lambda"] = t.lambda;
    } else {
        tr["h1"] = t.h1;
        tr["h2"] = t.h2;
    }
    tr["tau"] = t.tau;
    if (t.delta) {
        if (const auto* c = std::get_if<double>(&*t.delta)) {
            tr["delta"] = *c;
        } else if (const auto* e = std::get_if<std::string>(&*t.delta)) {
            tr["delta"] = {{"expression", *e}};
        } else {
            oj table = oj::array();
            for (const auto& [bt, bv] : std::get<DeltaTable>(*t.delta).breakpoints) table.push_back({bt, bv});
            tr["delta"] = {{"table", table}};
        }
    }
    tr["watchdog_fraction"] = t.watchdog_fraction;
    out["trigger"] = tr;
    out["grid"] = {{"t0", cfg.grid.t0}, {"dt", cfg.grid.dt}, {"steps", cfg.grid.steps}};
    out["ensemble"] = {{"n_paths", cfg.ensemble.n_paths}, {"seed", cfg.ensemble.seed}};
    out["x0"] = cfg.x0;
    if (cfg.verify) {
        const auto& v = *cfg.verify;
        oj box = oj::array();
        for (const auto& [lo, hi] : v.box) box.push_back({lo, hi});
        oj ver = {{"box", box}, {"samples", v.samples}, {"axis_points", v.axis_points}, {"M_bar", v.M_bar}};
        if (v.lambda_bar) ver["lambda_bar"] = *v.lambda_bar;
        ver["t_max"] = v.t_max;
        if (v.gamma) ver["gamma"] = *v.gamma;
        oj claims = oj::object();
        if (v.claims.c1) claims["c1"] = *v.claims.c1;
        if (v.claims.c2) claims["c2"] = *v.claims.c2;
        if (v.claims.mu) claims["mu"] = *v.claims.mu;
        if (v.claims.c3) claims["c3"] = *v.claims.c3;
        ver["claims"] = claims;
        out["verify"] = ver;
    }
    if (cfg.output) out["output"] = {{"dir", cfg.output->dir}};
    return out;
}

RunConfig apply_overrides(RunConfig cfg, const Overrides& o) {
    std::vector<std::string> errors;
    if (o.seed) cfg.ensemble.seed = *o.seed;
    if (o.n_paths) cfg.ensemble.n_paths = *o.n_paths;
    if (o.tau) cfg.trigger.tau = *o.tau;
    auto need_exponential = [&](const char* flag) {
        if (!cfg.trigger.is_exponential()) {
            errors.push_back(std::string(flag) + ": requires an exponential trigger form");
            return false;
        }
        return true;
    };
    if (o.lambda && need_exponential("--lambda")) cfg.trigger.lambda = *o.lambda;
    if (o.M1 && need_exponential("--M1")) cfg.trigger.M1 = *o.M1;
    if (o.M2 && need_exponential("--M2")) cfg.trigger.M2 = *o.M2;
    if (o.delta) {
        if (*o.delta > 0.0) {
            cfg.trigger.delta = *o.delta;
            if (cfg.trigger.form == "exponential") cfg.trigger.form = "exponential_plus_delta";
        } else {
            cfg.trigger.delta.reset();
            if (cfg.trigger.form == "exponential_plus_delta") cfg.trigger.form = "exponential";
        }
    }
    if (o.uncontrolled) {
        cfg.controller.k1.assign(cfg.system.dim_control, "0");
        cfg.controller.k2.assign(cfg.system.dim_control, "0");
        cfg.controller.label = "uncontrolled";
        cfg.controller.clamp.reset();
    }
    if (o.output_dir) cfg.output = OutputSection{*o.output_dir};
    auto more = validate(cfg);
    errors.insert(errors.end(), more.begin(), more.end());
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

namespace {

// Runs `f` on a contiguous scratch span holding [x..., u..., t].
template <class F>
void with_slots(std::span<const double> x, std::span<const double> u, double t, F&& f) {
    const std::size_t size = x.size() + u.size() + 1;
    auto fill = [&](std::span<double> s) {
        std::copy(x.begin(), x.end(), s.begin());
        std::copy(u.begin(), u.end(), s.begin() + static_cast<std::ptrdiff_t>(x.size()));
        s[size - 1] = t;
        f(std::span<const double>(s.data(), size));
    };
    if (size <= 32) {
        std::array<double, 32> buf;
        fill(std::span<double>(buf.data(), size));
    } else {
        std::vector<double> buf(size);
        fill(buf);
    }
}

std::vector<expr::BoundExpression> bind_all(const std::vector<std::string>& sources,
                                            const std::vector<std::string>& layout) {
    std::vector<expr::BoundExpression> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.emplace_back(expr::Expression::parse(s), layout);
    return out;
}

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> v;
    for (const auto& p : parts) v.insert(v.end(), p.begin(), p.end());
    return v;
}

ControlMap make_control_map(const std::vector<std::string>& sources, const std::vector<std::string>& layout) {
    auto exprs = std::make_shared<const std::vector<expr::BoundExpression>>(bind_all(sources, layout));
    return [exprs](std::span<const double> x, std::span<double> u) {
        for (std::size_t i = 0; i < exprs->size(); ++i) u[i] = (*exprs)[i](x);
    };
}

}  // namespace

Problem build_problem(const RunConfig& cfg) {
    if (auto errors = validate(cfg); !errors.empty()) throw ConfigError(std::move(errors));
    Problem p;
    p.config = cfg;
    const std::size_t n = cfg.system.dim_state;
    const std::size_t m = cfg.system.dim_noise;
    const std::size_t l = cfg.system.dim_control;
    const auto xs = state_names(n);
    const auto us = control_names(l);

    SdeSystem& sys = p.setup.system;
    sys.dim_state = n;
    sys.dim_noise = m;
    sys.dim_control = l;
    sys.label = cfg.system.label;
    {
        auto drift = std::make_shared<const std::vector<expr::BoundExpression>>(
            bind_all(cfg.system.drift, concat({xs, us, {"t"}})));
        sys.drift = [drift](std::span<const double> x, std::span<const double> u, double t, std::span<double> out) {
            with_slots(x, u, t, [&](std::span<const double> s) {
                for (std::size_t i = 0; i < drift->size(); ++i) out[i] = (*drift)[i](s);
            });
        };
        std::vector<std::string> flat;
        for (const auto& row : cfg.system.diffusion) flat.insert(flat.end(), row.begin(), row.end());
        auto diffusion = std::make_shared<const std::vector<expr::BoundExpression>>(bind_all(flat, concat({xs, {"t"}})));
        sys.diffusion = [diffusion](std::span<const double> x, double t, std::span<double> out) {
            with_slots(x, {}, t, [&](std::span<const double> s) {
                for (std::size_t i = 0; i < diffusion->size(); ++i) out[i] = (*diffusion)[i](s);
            });
        };
    }

    SwitchingController& ctl = p.setup.controller;
    ctl.dim_control = l;
    ctl.label = cfg.controller.label;
    ctl.k1 = make_control_map(cfg.controller.k1, xs);
    ctl.k2 = make_control_map(cfg.controller.k2, xs);
    if (cfg.controller.clamp) ctl.clamp = ClampBox{cfg.controller.clamp->lower, cfg.controller.clamp->upper};

    const auto& tr = cfg.trigger;
    std::optional<DeltaFunction> delta;
    if (tr.delta) delta = make_delta(*tr.delta);
    ThresholdSpec spec;
    if (tr.form == "exponential") {
        spec = ThresholdSpec::exponential(tr.M1, tr.M2, tr.lambda);
    } else if (tr.form == "exponential_plus_delta") {
        spec = ThresholdSpec::exponential_plus_delta(tr.M1, tr.M2, tr.lambda, *delta);
    } else {
        static const std::vector<std::string> kTime{"t"};
        auto h1 = std::make_shared<const expr::BoundExpression>(expr::Expression::parse(tr.h1), kTime);
        auto h2 = std::make_shared<const expr::BoundExpression>(expr::Expression::parse(tr.h2), kTime);
        spec = ThresholdSpec::generic([h1](double t) { return (*h1)(std::span<const double>(&t, 1)); },
                                      [h2](double t) { return (*h2)(std::span<const double>(&t, 1)); }, delta);
    }
    p.setup.trigger.spec = std::make_shared<const ThresholdSpec>(std::move(spec));
    p.setup.trigger.tau = tr.tau;
    p.setup.trigger.watchdog_fraction = tr.watchdog_fraction;

    p.setup.x0 = cfg.x0;
    p.setup.grid = TimeGrid{cfg.grid.t0, cfg.grid.dt, cfg.grid.steps};
    p.ensemble.n_paths = cfg.ensemble.n_paths;
    p.ensemble.seed = cfg.ensemble.seed;

    if (cfg.lyapunov) {
        LyapunovCandidate cand;
        cand.dim = n;
        auto V = std::make_shared<const expr::BoundExpression>(expr::Expression::parse(cfg.lyapunov->V), xs);
        cand.V = [V](std::span<const double> x) { return (*V)(x); };
        if (cfg.lyapunov->grad) {
            auto g = std::make_shared<const std::vector<expr::BoundExpression>>(bind_all(*cfg.lyapunov->grad, xs));
            cand.grad = [g](std::span<const double> x, std::span<double> out) {
                for (std::size_t i = 0; i < g->size(); ++i) out[i] = (*g)[i](x);
            };
        }
        if (cfg.lyapunov->hess) {
            std::vector<std::string> flat;
            for (const auto& row : *cfg.lyapunov->hess) flat.insert(flat.end(), row.begin(), row.end());
            auto h = std::make_shared<const std::vector<expr::BoundExpression>>(bind_all(flat, xs));
            cand.hess = [h](std::span<const double> x, std::span<double> out) {
                for (std::size_t i = 0; i < h->size(); ++i) out[i] = (*h)[i](x);
            };
        }
        p.candidate = std::move(cand);
    }
    return p;
}

VerifyInputs verify_inputs(const Problem& p) {
    if (!p.candidate || !p.config.verify) {
        throw ConfigError({"verification needs both a lyapunov and a verify section"});
    }
    const auto& v = *p.config.verify;
    VerifyInputs in;
    in.system = &p.setup.system;
    in.controller = &p.setup.controller;
    in.candidate = &*p.candidate;
    for (const auto& [lo, hi] : v.box) {
        in.box.lower.push_back(lo);
        in.box.upper.push_back(hi);
    }
    in.sampler.samples = v.samples;
    in.sampler.axis_points = v.axis_points;
    in.sampler.t_max = v.t_max;
    in.primary.M_bar = v.M_bar;
    in.primary.mu = v.claims.mu;
    in.primary.lambda_bar = v.lambda_bar;
    in.claims = {v.claims.c1, v.claims.c2, v.claims.mu, v.claims.c3};
    return in;
}

std::optional<AssumptionReport> report_from_claims(const RunConfig& cfg) {
    if (!cfg.verify || !cfg.verify->claims.complete()) return std::nullopt;
    const auto& v = *cfg.verify;
    AssumptionReport r;
    r.c1 = r.certified_c1 = *v.claims.c1;
    r.c2 = r.certified_c2 = *v.claims.c2;
    r.mu = r.certified_mu = *v.claims.mu;
    r.c3 = r.certified_c3 = *v.claims.c3;
    r.M_bar = v.M_bar;
    r.lambda_bar = v.lambda_bar;
    r.lambda_max_admissible = r.mu / r.c2;
    r.assumption1_pass = true;
    r.assumption2_pass = true;
    for (const auto& [lo, hi] : v.box) {
        r.box.lower.push_back(lo);
        r.box.upper.push_back(hi);
    }
    return r;
}

}  // namespace detm
