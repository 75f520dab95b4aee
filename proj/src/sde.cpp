#include "detm/sde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace detm {

Vector SdeSystem::eval_drift(std::span<const double> x, std::span<const double> u, double t) const {
    Vector out(dim_state, 0.0);
    drift(x, u, t, out);
    return out;
}

Vector SdeSystem::eval_diffusion(std::span<const double> x, double t) const {
    Vector out(dim_state * dim_noise, 0.0);
    diffusion(x, t, out);
    return out;
}

std::size_t TimeGrid::index_at_or_after(double t) const {
    if (t <= t0) return 0;
    auto k = static_cast<std::size_t>(std::ceil((t - t0) / dt));
    while (k > 0 && time(k - 1) >= t) --k;
    while (k <= steps && time(k) < t) ++k;
    return std::min(k, steps);
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t path_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32),
                      0x44455445u};
    engine_.seed(seq);
}

void NoiseStream::next(double dt, std::span<double> dW) {
    const double scale = std::sqrt(dt);
    for (double& w : dW) w = scale * normal_(engine_);
}

double squared_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

Mode PathRecord::mode_at(std::size_t k) const {
    Mode m = Mode::Secondary;
    for (const Event& e : events) {
        if (e.step > k) break;
        m = mode_after(e.kind);
    }
    return m;
}

std::optional<Vector> em_step(const SdeSystem& sys, std::span<const double> x, std::span<const double> u, double s,
                              double dt, std::span<const double> dW) {
    const std::size_t n = sys.dim_state;
    const std::size_t m = sys.dim_noise;
    if (x.size() != n || u.size() != sys.dim_control || dW.size() != m) {
        throw std::invalid_argument("em_step: dimension mismatch");
    }
    const Vector f = sys.eval_drift(x, u, s);
    const Vector g = sys.eval_diffusion(x, s);
    Vector next(n);
    for (std::size_t i = 0; i < n; ++i) {
        double noise = 0.0;
        for (std::size_t j = 0; j < m; ++j) noise += g[i * m + j] * dW[j];
        next[i] = x[i] + f[i] * dt + noise;
        if (!std::isfinite(next[i])) return std::nullopt;
    }
    return next;
}

PathRecord simulate_path(const SdeSystem& sys, const TimeGrid& grid, const SwitchingController& controller,
                         const TriggerConfig& trigger, NoiseStream noise, std::span<const double> x0) {
    const std::size_t n = sys.dim_state;
    if (x0.size() != n) throw std::invalid_argument("simulate_path: x0 has the wrong dimension");
    if (controller.dim_control != sys.dim_control) {
        throw std::invalid_argument("simulate_path: controller and system disagree on control dimension");
    }
    for (double v : x0) {
        if (!std::isfinite(v)) throw std::invalid_argument("simulate_path: x0 must be finite");
    }

    PathRecord rec;
    rec.dim_state = n;
    rec.dim_control = sys.dim_control;
    rec.grid = grid;
    rec.states.reserve((grid.steps + 1) * n);
    rec.controls.reserve(grid.steps * sys.dim_control);
    rec.states.insert(rec.states.end(), x0.begin(), x0.end());

    Vector x(x0.begin(), x0.end());
    auto state = TriggerState::init(trigger.spec, trigger.tau, squared_norm(x), grid.t0);
    rec.events.push_back(
        {grid.t0, state.phase() == Mode::Primary ? EventKind::ToPrimary : EventKind::ToSecondary, 0});

    Vector dW(sys.dim_noise);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double t = grid.time(k);
        if (k > 0) {
            if (auto ev = state.step(t, squared_norm(x))) rec.events.push_back({t, *ev, k});
        }
        ControlInput ci = control_input(controller, state.phase(), x);
        bool finite = true;
        for (double v : ci.u) finite = finite && std::isfinite(v);
        if (!finite) {
            rec.diverged = true;
            rec.divergence_time = t;
            break;
        }
        if (ci.clamped) ++rec.clamp_count;
        rec.controls.insert(rec.controls.end(), ci.u.begin(), ci.u.end());

        noise.next(grid.dt, dW);
        auto next = em_step(sys, x, ci.u, t, grid.dt, dW);
        if (!next || squared_norm(*next) > kDivergenceNormSq) {
            rec.diverged = true;
            rec.divergence_time = grid.time(k + 1);
            break;
        }
        x = std::move(*next);
        rec.states.insert(rec.states.end(), x.begin(), x.end());
    }

    if (!rec.diverged) {
        if (auto warning =
                existence_watchdog(state, grid.horizon(), grid.t0, grid.horizon(), trigger.watchdog_fraction)) {
            rec.warnings.push_back(*warning);
        }
    }
    return rec;
}

}  // namespace detm
