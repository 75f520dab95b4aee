#pragma once

// Double event-triggering: an online two-phase machine over |x|^2.
//
//   Primary   -> Secondary  at the first query t with t - t_i >= tau and |x|^2 <= h2(t)
//   Secondary -> Primary    at the first query t with |x|^2 >= h1(t) + delta(t)
//
// Both inequalities are non-strict. The dwell guard tau applies only to the
// Primary phase.

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "detm/expr.hpp"
#include "detm/types.hpp"

namespace detm {

using TimeFunction = std::function<double(double)>;

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Additive term on the upper threshold. Must stay positive.
class DeltaFunction {
public:
    enum class Kind { Constant, Expression, Table };

    static DeltaFunction constant(double value);
    /// Expression in `t`.
    static DeltaFunction expression(expr::Expression e);
    /// Piecewise-constant: `breakpoints[i] = {t_i, v_i}` holds v_i on [t_i, t_{i+1}).
    /// Times before the first breakpoint take the first value.
    static DeltaFunction table(std::vector<std::pair<double, double>> breakpoints);

    double operator()(double t) const;
    Kind kind() const noexcept { return kind_; }
    /// Value of a constant delta, or the last table value (its limit as t grows).
    std::optional<double> limit_value() const;
    const std::vector<std::pair<double, double>>& breakpoints() const noexcept { return table_; }

private:
    Kind kind_ = Kind::Constant;
    double constant_ = 0.0;
    std::optional<expr::BoundExpression> expr_;
    std::vector<std::pair<double, double>> table_;
};

class ThresholdSpec {
public:
    enum class Form { Generic, Exponential, ExponentialPlusDelta };

    struct ExponentialParams {
        double m1;
        double m2;
        double lambda;
    };

    /// h1 = M1 e^{-lambda t}, h2 = M2 e^{-lambda t}. Requires 0 < M2 <= M1, lambda > 0.
    static ThresholdSpec exponential(double m1, double m2, double lambda);
    /// Exponential thresholds with `delta` added to h1. Requires 0 < M2 <= M1 + delta(0).
    static ThresholdSpec exponential_plus_delta(double m1, double m2, double lambda, DeltaFunction delta);
    static ThresholdSpec generic(TimeFunction h1, TimeFunction h2, std::optional<DeltaFunction> delta = {});

    double h1(double t) const { return h1_(t); }
    double h2(double t) const { return h2_(t); }
    double delta(double t) const { return delta_ ? (*delta_)(t) : 0.0; }
    /// h1(t) + delta(t): the level that re-engages the primary map.
    double upper(double t) const { return h1(t) + delta(t); }

    Form form() const noexcept { return form_; }
    const std::optional<ExponentialParams>& exponential_params() const noexcept { return params_; }
    const std::optional<DeltaFunction>& delta_function() const noexcept { return delta_; }

private:
    Form form_ = Form::Generic;
    TimeFunction h1_;
    TimeFunction h2_;
    std::optional<DeltaFunction> delta_;
    std::optional<ExponentialParams> params_;
};

std::string to_string(ThresholdSpec::Form form);

/// Everything a path needs to run the trigger.
struct TriggerConfig {
    std::shared_ptr<const ThresholdSpec> spec;
    double tau = 0.0;
    /// Primary-phase share of the horizon above which the watchdog warns.
    double watchdog_fraction = 0.8;
};

class TriggerState {
public:
    /// Starts Primary iff x0_norm_sq > h2(t0), otherwise Secondary.
    static TriggerState init(std::shared_ptr<const ThresholdSpec> spec, double tau, double x0_norm_sq, double t0);

    /// Feeds one sampled value. Query times must be strictly increasing.
    std::optional<EventKind> step(double t, double x_norm_sq);

    Mode phase() const noexcept { return phase_; }
    double phase_entry_time() const noexcept { return entry_; }
    double last_query_time() const noexcept { return last_query_; }
    double tau() const noexcept { return tau_; }
    const ThresholdSpec& spec() const noexcept { return *spec_; }
    std::size_t to_primary_count() const noexcept { return to_primary_; }
    std::size_t to_secondary_count() const noexcept { return to_secondary_; }

private:
    TriggerState() = default;

    std::shared_ptr<const ThresholdSpec> spec_;
    Mode phase_ = Mode::Secondary;
    double entry_ = 0.0;
    double last_query_ = 0.0;
    double tau_ = 0.0;
    std::size_t to_primary_ = 0;
    std::size_t to_secondary_ = 0;
};

struct InterEventMinima {
    double primary_dwell = std::numeric_limits<double>::infinity();
    double secondary_dwell = std::numeric_limits<double>::infinity();
    double full_cycle = std::numeric_limits<double>::infinity();
};

/// All complete intervals found in an alternating log.
struct InterEventIntervals {
    std::vector<double> primary_dwell;    // s_i - t_i
    std::vector<double> secondary_dwell;  // t_{i+1} - s_i
    std::vector<double> full_cycle;       // t_{i+1} - t_i
};

InterEventIntervals inter_event_intervals(const EventLog& log);
/// Minima over the log; +inf where no complete interval exists.
InterEventMinima min_inter_event(const EventLog& log);

/// True when kinds strictly alternate and times are non-decreasing.
bool alternates(const EventLog& log);

/// Warns when the Primary phase has lasted longer than `fraction` of the
/// horizon [t_start, t_end]. Never changes the state.
std::optional<std::string> existence_watchdog(const TriggerState& state, double t, double t_start, double t_end,
                                              double fraction);

/// Runs the trigger on a sampled scalar signal (the signal value itself is
/// compared against the thresholds). Used for deterministic demos.
EventLog trigger_on_signal(const TimeFunction& signal, double t0, double dt, std::size_t steps,
                           std::shared_ptr<const ThresholdSpec> spec, double tau);

}  // namespace detm
