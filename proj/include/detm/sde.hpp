#pragma once

// Controlled Ito SDE  dx = f(x, u) dt + g(x) dW  and its Euler-Maruyama
// sample paths under a double-event-triggered switching controller.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "detm/control.hpp"
#include "detm/trigger.hpp"
#include "detm/types.hpp"

namespace detm {

/// f(x, u, t) written into `out` (length n).
using DriftFn = std::function<void(std::span<const double> x, std::span<const double> u, double t,
                                   std::span<double> out)>;
/// g(x, t) written row-major into `out` (n rows, m columns).
using DiffusionFn = std::function<void(std::span<const double> x, double t, std::span<double> out)>;

struct SdeSystem {
    std::size_t dim_state = 1;
    std::size_t dim_noise = 1;
    std::size_t dim_control = 0;
    DriftFn drift;
    DiffusionFn diffusion;
    std::string label;

    Vector eval_drift(std::span<const double> x, std::span<const double> u, double t) const;
    /// Row-major n x m.
    Vector eval_diffusion(std::span<const double> x, double t) const;
};

struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.1;
    std::size_t steps = 0;

    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double horizon() const { return time(steps); }
    /// Index of the first grid point >= t (clamped to `steps`).
    std::size_t index_at_or_after(double t) const;
};

/// Standard normal increments for one path, fully determined by (seed, path_index).
class NoiseStream {
public:
    NoiseStream(std::uint64_t seed, std::uint64_t path_index);

    /// Fills `dW` with i.i.d. N(0, dt) draws.
    void next(double dt, std::span<double> dW);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// |x|^2 > this counts as divergence.
inline constexpr double kDivergenceNormSq = 1e12;

double squared_norm(std::span<const double> x);

struct PathRecord {
    std::size_t dim_state = 0;
    std::size_t dim_control = 0;
    TimeGrid grid;
    Vector states;    // row k = state at grid.time(k)
    Vector controls;  // row k = control applied on [t_k, t_{k+1})
    EventLog events;  // includes the initial phase entry at t0
    bool diverged = false;
    std::optional<double> divergence_time;
    std::size_t clamp_count = 0;
    std::vector<std::string> warnings;

    std::size_t num_states() const { return dim_state == 0 ? 0 : states.size() / dim_state; }
    std::span<const double> state(std::size_t k) const { return {states.data() + k * dim_state, dim_state}; }
    std::span<const double> control(std::size_t k) const {
        return {controls.data() + k * dim_control, dim_control};
    }
    /// Mode in force on [t_k, t_{k+1}), reconstructed from the event log.
    Mode mode_at(std::size_t k) const;

    bool operator==(const PathRecord& o) const {
        return dim_state == o.dim_state && dim_control == o.dim_control && states == o.states &&
               controls == o.controls && events == o.events && diverged == o.diverged &&
               divergence_time == o.divergence_time && clamp_count == o.clamp_count && warnings == o.warnings;
    }
};

/// One Euler-Maruyama step x + f(x,u) dt + g(x) dW. Returns nullopt if the
/// result is not finite.
std::optional<Vector> em_step(const SdeSystem& sys, std::span<const double> x, std::span<const double> u, double s,
                              double dt, std::span<const double> dW);

/// Integrates one path. Before step k >= 1 the trigger sees (t_k, |x_k|^2);
/// a mode change applies from that step on. The control is recomputed from
/// the current state every step.
PathRecord simulate_path(const SdeSystem& sys, const TimeGrid& grid, const SwitchingController& controller,
                         const TriggerConfig& trigger, NoiseStream noise, std::span<const double> x0);

}  // namespace detm
