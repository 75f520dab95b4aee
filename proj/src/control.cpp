#include "detm/control.hpp"

#include <algorithm>
#include <stdexcept>

namespace detm {

SwitchingController SwitchingController::zero(std::size_t dim_control, std::string label) {
    SwitchingController c;
    c.dim_control = dim_control;
    c.k1 = [](std::span<const double>, std::span<double> u) { std::fill(u.begin(), u.end(), 0.0); };
    c.k2 = c.k1;
    c.label = std::move(label);
    return c;
}

ControlInput control_input(const SwitchingController& c, Mode mode, std::span<const double> x) {
    ControlInput out;
    out.u.assign(c.dim_control, 0.0);
    if (c.dim_control == 0) return out;
    const ControlMap& k = mode == Mode::Primary ? c.k1 : c.k2;
    k(x, out.u);
    if (c.clamp) {
        if (c.clamp->lower.size() != c.dim_control || c.clamp->upper.size() != c.dim_control) {
            throw std::invalid_argument("clamp box dimension does not match control dimension");
        }
        for (std::size_t i = 0; i < c.dim_control; ++i) {
            const double v = std::clamp(out.u[i], c.clamp->lower[i], c.clamp->upper[i]);
            if (v != out.u[i]) out.clamped = true;
            out.u[i] = v;
        }
    }
    return out;
}

double duty_cycle(const EventLog& log, double horizon_end, double t0) {
    const double span = horizon_end - t0;
    if (!(span > 0.0) || log.empty()) return 0.0;
    double primary = 0.0;
    std::optional<double> open;
    for (const Event& e : log) {
        const double t = std::min(e.time, horizon_end);
        if (e.kind == EventKind::ToPrimary) {
            if (!open) open = t;
        } else if (open) {
            primary += t - *open;
            open.reset();
        }
    }
    if (open) primary += horizon_end - *open;
    return std::clamp(primary / span, 0.0, 1.0);
}

}  // namespace detm
