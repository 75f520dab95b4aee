#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "detm/models.hpp"
#include "detm/sde.hpp"
#include "support.hpp"

using namespace detm;

namespace {

SdeSystem scalar_linear(double a, double sigma) {
    SdeSystem s;
    s.dim_state = 1;
    s.dim_noise = 1;
    s.dim_control = 0;
    s.drift = [a](std::span<const double> x, std::span<const double>, double, std::span<double> out) {
        out[0] = -a * x[0];
    };
    s.diffusion = [sigma](std::span<const double>, double, std::span<double> out) { out[0] = sigma; };
    return s;
}

TriggerConfig simple_trigger(double tau = 0.0) {
    return {std::make_shared<const ThresholdSpec>(ThresholdSpec::exponential(0.8, 0.5, 0.1)), tau, 0.8};
}

const Problem& satellite() {
    static const Problem p = satellite_preset().build();
    return p;
}

}  // namespace

TEST(EmStep, SatelliteEquilibriumPreserved) {
    const Vector zero = {0.0, 0.0};
    const Vector u = {0.0};
    const Vector dW = {0.37};
    const auto next = em_step(satellite().setup.system, zero, u, 0.0, 0.1, dW);
    ASSERT_TRUE(next);
    EXPECT_EQ((*next)[0], 0.0);
    EXPECT_EQ((*next)[1], 0.0);
}

TEST(EmStep, DeterministicScalarStep) {
    const Vector x = {1.0};
    const Vector dW = {0.0};
    const auto next = em_step(scalar_linear(1.0, 0.0), x, {}, 0.0, 0.1, dW);
    ASSERT_TRUE(next);
    EXPECT_DOUBLE_EQ((*next)[0], 0.9);
}

TEST(EmStep, SatelliteOneStepOracle) {
    const double x1 = -2.0, x2 = 3.0, u = 2.0, dt = 0.1, dw = 0.05;
    const double f1 = x2;
    const double f2 = -x2 + 0.1 * std::sin(2.0 * x1) + u;
    const double g2 = -0.5 * (x1 + 1.0 * x2);
    const Vector x = {x1, x2};
    const Vector uu = {u};
    const Vector dW = {dw};
    const auto next = em_step(satellite().setup.system, x, uu, 0.0, dt, dW);
    ASSERT_TRUE(next);
    EXPECT_NEAR((*next)[0], x1 + f1 * dt, 1e-15);
    EXPECT_NEAR((*next)[1], x2 + f2 * dt + g2 * dw, 1e-15);
}

TEST(EmStep, NonFiniteResultSignalsDivergence) {
    SdeSystem s = scalar_linear(1.0, 0.0);
    s.drift = [](std::span<const double>, std::span<const double>, double, std::span<double> out) {
        out[0] = std::numeric_limits<double>::infinity();
    };
    const Vector x = {1.0};
    const Vector dW = {0.0};
    EXPECT_FALSE(em_step(s, x, {}, 0.0, 0.1, dW).has_value());
}

TEST(SdeSystem, SatelliteVanishesAtOriginForSampledTimes) {
    const auto& sys = satellite().setup.system;
    const Vector zero = {0.0, 0.0};
    const Vector u = {0.0};
    for (double t : {0.0, 1.5, 10.0, 49.9}) {
        for (double v : sys.eval_drift(zero, u, t)) EXPECT_EQ(v, 0.0);
        for (double v : sys.eval_diffusion(zero, t)) EXPECT_EQ(v, 0.0);
    }
}

TEST(SdeSystem, SatelliteDriftAndDiffusionAtInitialState) {
    const auto& sys = satellite().setup.system;
    const Vector x = {-2.0, 3.0};
    const Vector u = {0.0};
    const auto f = sys.eval_drift(x, u, 0.0);
    EXPECT_EQ(f[0], 3.0);
    EXPECT_DOUBLE_EQ(f[1], -3.0 + 0.1 * std::sin(-4.0));
    const auto g = sys.eval_diffusion(x, 0.0);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], -0.5);
}

TEST(TimeGrid, TimesAndIndex) {
    const TimeGrid g{0.0, 0.1, 500};
    EXPECT_DOUBLE_EQ(g.horizon(), 50.0);
    EXPECT_EQ(g.time(0), 0.0);
    EXPECT_EQ(g.index_at_or_after(0.25), 3u);
    EXPECT_EQ(g.index_at_or_after(1000.0), 500u);
    for (std::size_t k = 1; k <= g.steps; ++k) ASSERT_GT(g.time(k), g.time(k - 1));
}

TEST(NoiseStream, ReplayIsBitIdentical) {
    NoiseStream a(42, 7);
    NoiseStream b(42, 7);
    NoiseStream c(42, 8);
    std::vector<double> da(3), db(3), dc(3);
    bool differs = false;
    for (int k = 0; k < 100; ++k) {
        a.next(0.1, da);
        b.next(0.1, db);
        c.next(0.1, dc);
        ASSERT_EQ(da, db);
        differs = differs || da != dc;
    }
    EXPECT_TRUE(differs);
}

TEST(NoiseStream, IncrementsHaveVarianceDt) {
    NoiseStream s(1, 0);
    const double dt = 0.04;
    const int n = 200000;
    std::vector<double> dW(2);
    double sum = 0.0, sum_sq = 0.0, cross = 0.0;
    for (int k = 0; k < n; ++k) {
        s.next(dt, dW);
        sum += dW[0];
        sum_sq += dW[0] * dW[0];
        cross += dW[0] * dW[1];
    }
    const double mean = sum / n;
    const double var = sum_sq / n;
    // Five standard errors of each estimator.
    EXPECT_NEAR(mean, 0.0, 5.0 * std::sqrt(dt / n));
    EXPECT_NEAR(var, dt, 5.0 * dt * std::sqrt(2.0 / n));
    EXPECT_NEAR(cross / n, 0.0, 5.0 * dt / std::sqrt(n));
}

TEST(SimulatePath, EquilibriumStaysAtZero) {
    const auto& p = satellite();
    const Vector zero = {0.0, 0.0};
    const auto rec = simulate_path(p.setup.system, p.setup.grid, p.setup.controller, p.setup.trigger,
                                   NoiseStream(1, 0), zero);
    ASSERT_EQ(rec.num_states(), p.setup.grid.steps + 1);
    for (double v : rec.states) ASSERT_EQ(v, 0.0);
    ASSERT_EQ(rec.events.size(), 1u);
    EXPECT_EQ(rec.events[0].kind, EventKind::ToSecondary);
    EXPECT_EQ(rec.events[0].time, 0.0);
}

TEST(SimulatePath, DeterministicDecayMatchesRecurrence) {
    const TimeGrid grid{0.0, 0.1, 100};
    const Vector x0 = {1.0};
    const auto rec = simulate_path(scalar_linear(1.0, 0.0), grid, SwitchingController::zero(0), simple_trigger(),
                                   NoiseStream(0, 0), x0);
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        const double expected = std::pow(0.9, static_cast<double>(k));
        ASSERT_NEAR(rec.state(k)[0], expected, 1e-14 * expected + 1e-300) << k;
    }
}

TEST(SimulatePath, SatelliteRunAlternatesAndRespectsDwell) {
    const auto& p = satellite();
    for (std::uint64_t j = 0; j < 20; ++j) {
        const auto rec = simulate_path(p.setup.system, p.setup.grid, p.setup.controller, p.setup.trigger,
                                       NoiseStream(42, j), p.setup.x0);
        ASSERT_FALSE(rec.diverged);
        ASSERT_TRUE(alternates(rec.events));
        ASSERT_EQ(rec.events.front().kind, EventKind::ToPrimary);
        if (rec.events.size() > 1) EXPECT_GE(rec.events[1].time - rec.events[0].time, 0.5);
        for (const auto& e : rec.events) ASSERT_EQ(e.time, p.setup.grid.time(e.step));
        EXPECT_TRUE(rec.warnings.empty());
    }
}

TEST(SimulatePath, ReplayIsBitIdentical) {
    const auto& p = satellite();
    const auto a = simulate_path(p.setup.system, p.setup.grid, p.setup.controller, p.setup.trigger,
                                 NoiseStream(5, 3), p.setup.x0);
    const auto b = simulate_path(p.setup.system, p.setup.grid, p.setup.controller, p.setup.trigger,
                                 NoiseStream(5, 3), p.setup.x0);
    EXPECT_TRUE(a == b);
}

TEST(SimulatePath, DivergenceTruncatesThePath) {
    SdeSystem s = scalar_linear(1.0, 0.0);
    s.drift = [](std::span<const double> x, std::span<const double>, double, std::span<double> out) {
        out[0] = x[0] * x[0] * x[0];
    };
    const TimeGrid grid{0.0, 0.1, 200};
    const Vector x0 = {10.0};
    const auto rec = simulate_path(s, grid, SwitchingController::zero(0), simple_trigger(), NoiseStream(0, 0), x0);
    EXPECT_TRUE(rec.diverged);
    ASSERT_TRUE(rec.divergence_time.has_value());
    EXPECT_LT(rec.num_states(), grid.steps + 1);
    for (std::size_t k = 0; k < rec.num_states(); ++k) {
        EXPECT_TRUE(std::isfinite(rec.state(k)[0]));
        EXPECT_LE(squared_norm(rec.state(k)), kDivergenceNormSq);
    }
}

TEST(SimulatePath, OuSecondMomentAtUnitTime) {
    const double a = 1.0, sigma = 0.5, dt = 0.01;
    const TimeGrid grid{0.0, dt, 100};
    const Vector x0 = {1.0};
    const auto sys = scalar_linear(a, sigma);
    const int n = 10000;
    std::vector<double> sq(n);
    for (int j = 0; j < n; ++j) {
        const auto rec = simulate_path(sys, grid, SwitchingController::zero(0), simple_trigger(),
                                       NoiseStream(2024, static_cast<std::uint64_t>(j)), x0);
        sq[j] = squared_norm(rec.state(grid.steps));
    }
    const double mean = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
    double var = 0.0;
    for (double v : sq) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (n - 1) / n);
    const double closed = std::exp(-2.0 * a) + sigma * sigma * (1.0 - std::exp(-2.0 * a)) / (2.0 * a);
    EXPECT_NEAR(mean, closed, 3.0 * se);
}
