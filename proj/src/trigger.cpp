#include "detm/trigger.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace detm {

DeltaFunction DeltaFunction::constant(double value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("delta must be a positive constant");
    DeltaFunction d;
    d.kind_ = Kind::Constant;
    d.constant_ = value;
    return d;
}

DeltaFunction DeltaFunction::expression(expr::Expression e) {
    static const std::array<std::string, 1> kLayout{"t"};
    DeltaFunction d;
    d.kind_ = Kind::Expression;
    d.expr_ = expr::BoundExpression(std::move(e), kLayout);
    return d;
}

DeltaFunction DeltaFunction::table(std::vector<std::pair<double, double>> breakpoints) {
    if (breakpoints.empty()) throw std::invalid_argument("delta table must not be empty");
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
        if (!(breakpoints[i].second > 0.0)) throw std::invalid_argument("delta table values must be positive");
        if (i > 0 && !(breakpoints[i].first > breakpoints[i - 1].first)) {
            throw std::invalid_argument("delta table times must be strictly increasing");
        }
    }
    DeltaFunction d;
    d.kind_ = Kind::Table;
    d.table_ = std::move(breakpoints);
    return d;
}

double DeltaFunction::operator()(double t) const {
    switch (kind_) {
        case Kind::Constant:
            return constant_;
        case Kind::Expression: {
            const std::array<double, 1> slots{t};
            return (*expr_)(slots);
        }
        case Kind::Table: {
            auto it = std::upper_bound(table_.begin(), table_.end(), t,
                                       [](double v, const auto& bp) { return v < bp.first; });
            if (it == table_.begin()) return table_.front().second;
            return std::prev(it)->second;
        }
    }
    return 0.0;
}

std::optional<double> DeltaFunction::limit_value() const {
    if (kind_ == Kind::Constant) return constant_;
    if (kind_ == Kind::Table) return table_.back().second;
    return std::nullopt;
}

ThresholdSpec ThresholdSpec::exponential(double m1, double m2, double lambda) {
    if (!(m2 > 0.0) || !(m2 <= m1)) throw std::invalid_argument("exponential thresholds require 0 < M2 <= M1");
    if (!(lambda > 0.0)) throw std::invalid_argument("exponential thresholds require lambda > 0");
    ThresholdSpec s;
    s.form_ = Form::Exponential;
    s.params_ = ExponentialParams{m1, m2, lambda};
    s.h1_ = [m1, lambda](double t) { return m1 * std::exp(-lambda * t); };
    s.h2_ = [m2, lambda](double t) { return m2 * std::exp(-lambda * t); };
    return s;
}

ThresholdSpec ThresholdSpec::exponential_plus_delta(double m1, double m2, double lambda, DeltaFunction delta) {
    if (!(m2 > 0.0) || !(m1 > 0.0)) throw std::invalid_argument("thresholds require M1 > 0 and M2 > 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("exponential thresholds require lambda > 0");
    if (!(m2 <= m1 + delta(0.0))) throw std::invalid_argument("thresholds require M2 <= M1 + delta(0)");
    ThresholdSpec s;
    s.form_ = Form::ExponentialPlusDelta;
    s.params_ = ExponentialParams{m1, m2, lambda};
    s.h1_ = [m1, lambda](double t) { return m1 * std::exp(-lambda * t); };
    s.h2_ = [m2, lambda](double t) { return m2 * std::exp(-lambda * t); };
    s.delta_ = std::move(delta);
    return s;
}

ThresholdSpec ThresholdSpec::generic(TimeFunction h1, TimeFunction h2, std::optional<DeltaFunction> delta) {
    ThresholdSpec s;
    s.form_ = Form::Generic;
    s.h1_ = std::move(h1);
    s.h2_ = std::move(h2);
    s.delta_ = std::move(delta);
    return s;
}

std::string to_string(ThresholdSpec::Form form) {
    switch (form) {
        case ThresholdSpec::Form::Generic: return "generic";
        case ThresholdSpec::Form::Exponential: return "exponential";
        case ThresholdSpec::Form::ExponentialPlusDelta: return "exponential_plus_delta";
    }
    return "?";
}

TriggerState TriggerState::init(std::shared_ptr<const ThresholdSpec> spec, double tau, double x0_norm_sq, double t0) {
    if (!(tau >= 0.0)) throw std::invalid_argument("tau must be non-negative");
    TriggerState s;
    s.spec_ = std::move(spec);
    s.tau_ = tau;
    s.entry_ = t0;
    s.last_query_ = t0;
    s.phase_ = x0_norm_sq > s.spec_->h2(t0) ? Mode::Primary : Mode::Secondary;
    return s;
}

std::optional<EventKind> TriggerState::step(double t, double x_norm_sq) {
    if (!(t > last_query_)) {
        std::ostringstream msg;
        msg << "trigger queried at t=" << t << " after t=" << last_query_ << "; query times must increase";
        throw ContractViolation(msg.str());
    }
    last_query_ = t;
    if (phase_ == Mode::Primary) {
        // Same subtraction that min_inter_event uses, so the dwell bound holds exactly.
        if (t - entry_ >= tau_ && x_norm_sq <= spec_->h2(t)) {
            phase_ = Mode::Secondary;
            entry_ = t;
            ++to_secondary_;
            return EventKind::ToSecondary;
        }
    } else if (x_norm_sq >= spec_->upper(t)) {
        phase_ = Mode::Primary;
        entry_ = t;
        ++to_primary_;
        return EventKind::ToPrimary;
    }
    return std::nullopt;
}

InterEventIntervals inter_event_intervals(const EventLog& log) {
    InterEventIntervals out;
    std::optional<double> last_primary;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const Event& e = log[i];
        if (i > 0) {
            const double gap = e.time - log[i - 1].time;
            if (log[i - 1].kind == EventKind::ToPrimary && e.kind == EventKind::ToSecondary) {
                out.primary_dwell.push_back(gap);
            } else if (log[i - 1].kind == EventKind::ToSecondary && e.kind == EventKind::ToPrimary) {
                out.secondary_dwell.push_back(gap);
            }
        }
        if (e.kind == EventKind::ToPrimary) {
            if (last_primary) out.full_cycle.push_back(e.time - *last_primary);
            last_primary = e.time;
        }
    }
    return out;
}

InterEventMinima min_inter_event(const EventLog& log) {
    const auto iv = inter_event_intervals(log);
    auto min_of = [](const std::vector<double>& v) {
        return v.empty() ? std::numeric_limits<double>::infinity() : *std::min_element(v.begin(), v.end());
    };
    return {min_of(iv.primary_dwell), min_of(iv.secondary_dwell), min_of(iv.full_cycle)};
}

bool alternates(const EventLog& log) {
    for (std::size_t i = 1; i < log.size(); ++i) {
        if (log[i].kind == log[i - 1].kind) return false;
        if (log[i].time < log[i - 1].time) return false;
    }
    return true;
}

std::optional<std::string> existence_watchdog(const TriggerState& state, double t, double t_start, double t_end,
                                              double fraction) {
    if (state.phase() != Mode::Primary) return std::nullopt;
    const double held = t - state.phase_entry_time();
    const double horizon = t_end - t_start;
    if (!(horizon > 0.0) || !(held > fraction * horizon)) return std::nullopt;
    std::ostringstream msg;
    msg << "primary phase held for " << held << " of a " << horizon << " horizon since t=" << state.phase_entry_time()
        << "; the decay-rate admissibility condition may be violated";
    return msg.str();
}

EventLog trigger_on_signal(const TimeFunction& signal, double t0, double dt, std::size_t steps,
                           std::shared_ptr<const ThresholdSpec> spec, double tau) {
    EventLog log;
    auto state = TriggerState::init(std::move(spec), tau, signal(t0), t0);
    log.push_back({t0, state.phase() == Mode::Primary ? EventKind::ToPrimary : EventKind::ToSecondary, 0});
    for (std::size_t k = 1; k <= steps; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        if (auto ev = state.step(t, signal(t))) log.push_back({t, *ev, k});
    }
    return log;
}

}  // namespace detm
