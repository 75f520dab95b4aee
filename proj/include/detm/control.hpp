#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "detm/types.hpp"

namespace detm {

/// k: R^n -> R^l, written into `u`.
using ControlMap = std::function<void(std::span<const double> x, std::span<double> u)>;

/// Componentwise actuator limits.
struct ClampBox {
    Vector lower;
    Vector upper;
};

/// Primary map k1 on [t_i, s_i), secondary map k2 on [s_i, t_{i+1}).
struct SwitchingController {
    std::size_t dim_control = 0;
    ControlMap k1;
    ControlMap k2;
    std::string label;
    std::optional<ClampBox> clamp;

    /// Both maps identically zero; `dim_control` may be 0.
    static SwitchingController zero(std::size_t dim_control, std::string label = "uncontrolled");
};

struct ControlInput {
    Vector u;
    bool clamped = false;
};

/// k1(x) in Primary, k2(x) in Secondary, then the optional clamp.
ControlInput control_input(const SwitchingController& c, Mode mode, std::span<const double> x);

/// Share of [t0, horizon_end] spent in the Primary phase. An empty log means
/// the run never left Secondary.
double duty_cycle(const EventLog& log, double horizon_end, double t0 = 0.0);

}  // namespace detm
