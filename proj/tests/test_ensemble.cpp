#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "detm/ensemble.hpp"
#include "detm/models.hpp"
#include "support.hpp"

using namespace detm;

namespace {

const Problem& satellite() {
    static const Problem p = satellite_preset().build();
    return p;
}

EnsembleOptions paths(std::size_t n, std::uint64_t seed = 42, int workers = 0) { return {n, seed, workers}; }

SimulationSetup satellite_with(double tau, double m2 = 0.5) {
    SimulationSetup s = satellite().setup;
    s.trigger.tau = tau;
    s.trigger.spec = std::make_shared<const ThresholdSpec>(ThresholdSpec::exponential(0.8, m2, 0.1));
    return s;
}

}  // namespace

TEST(Ensemble, EquilibriumInitialStateGivesZeroMoment) {
    SimulationSetup s = satellite().setup;
    s.x0 = {0.0, 0.0};
    const auto r = run_ensemble(s, paths(20));
    for (double v : r.stats.mean_sq) ASSERT_EQ(v, 0.0);
    for (double v : r.stats.std_error) ASSERT_EQ(v, 0.0);
}

TEST(Ensemble, FirstRowIsInitialSecondMoment) {
    const auto r = run_ensemble(satellite().setup, paths(10));
    EXPECT_EQ(r.stats.mean_sq.front(), 13.0);
    EXPECT_EQ(r.stats.std_error.front(), 0.0);
    EXPECT_EQ(r.stats.mean_sq.size(), satellite().setup.grid.steps + 1);
}

TEST(Ensemble, AllPathsDivergedThrows) {
    SimulationSetup s = ou_preset().build().setup;
    s.system.drift = [](std::span<const double> x, std::span<const double>, double, std::span<double> out) {
        out[0] = x[0] * x[0] * x[0];
    };
    s.x0 = {10.0};
    EXPECT_THROW(run_ensemble(s, paths(5)), AllPathsDiverged);
}

TEST(Ensemble, MatchesIndependentAverageOfPaths) {
    const auto& s = satellite().setup;
    const auto r = run_ensemble(s, paths(50, 9));
    for (std::size_t k : {std::size_t{1}, std::size_t{100}, s.grid.steps}) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::uint64_t j = 0; j < 50; ++j) {
            const auto rec = simulate_path(s.system, s.grid, s.controller, s.trigger, NoiseStream(9, j), s.x0);
            const double v = squared_norm(rec.state(k));
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / 50.0;
        const double se = std::sqrt((sum_sq / 50.0 - mean * mean) * 50.0 / 49.0 / 50.0);
        EXPECT_NEAR(r.stats.mean_sq[k], mean, 1e-12 * mean);
        EXPECT_NEAR(r.stats.std_error[k], se, 1e-9 * se + 1e-15);
    }
}

TEST(Ensemble, ReproducibleAcrossWorkerCounts) {
    const auto& s = satellite().setup;
    const auto serial = run_ensemble_serial(s, paths(64, 3));
    for (int w : {1, 2, 4}) {
        const auto par = run_ensemble(s, paths(64, 3, w));
        EXPECT_TRUE(par.stats == serial.stats) << w;
        ASSERT_EQ(par.paths.size(), serial.paths.size());
        for (std::size_t j = 0; j < par.paths.size(); ++j) ASSERT_TRUE(par.paths[j] == serial.paths[j]);
    }
}

TEST(Ensemble, SeedChangesResult) {
    const auto& s = satellite().setup;
    EXPECT_NE(run_ensemble(s, paths(20, 1)).stats.mean_sq, run_ensemble(s, paths(20, 2)).stats.mean_sq);
}

TEST(Ensemble, StandardErrorShrinksAsInverseRootN) {
    const auto setup = ou_preset().build().setup;
    std::vector<double> scaled;
    for (std::size_t n : {100, 400, 1600}) {
        const auto r = run_ensemble(setup, paths(n, 11));
        scaled.push_back(r.stats.std_error.back() * std::sqrt(static_cast<double>(n)));
    }
    for (double v : scaled) {
        EXPECT_LT(v / scaled.front(), 1.5);
        EXPECT_GT(v / scaled.front(), 1.0 / 1.5);
    }
}

TEST(PairwiseSum, MatchesExactSums) {
    std::vector<double> v(1000);
    std::iota(v.begin(), v.end(), 1.0);
    EXPECT_EQ(pairwise_sum(v), 500500.0);
    EXPECT_EQ(pairwise_sum(std::span<const double>{}), 0.0);
    const std::vector<double> one = {3.5};
    EXPECT_EQ(pairwise_sum(one), 3.5);
}

TEST(PairwiseSum, AccurateOnSmallIncrements) {
    std::vector<double> v(1 << 20, 0.1);
    EXPECT_NEAR(pairwise_sum(v), 0.1 * (1 << 20), 1e-9);
}

TEST(FitDecay, RecoversSyntheticExponential) {
    std::vector<double> t, y;
    for (int k = 0; k <= 100; ++k) {
        t.push_back(0.1 * k);
        y.push_back(5.0 * std::exp(-0.3 * t.back()));
    }
    const auto f = fit_decay(t, y, 2.0, 10.0);
    EXPECT_NEAR(f.rate, -0.3, 1e-12);
    EXPECT_NEAR(f.intercept, std::log(5.0), 1e-10);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_EQ(f.points, 81u);
}

TEST(FitDecay, TooFewPointsThrows) {
    std::vector<double> t, y;
    for (int k = 0; k < 5; ++k) {
        t.push_back(k);
        y.push_back(1.0);
    }
    EXPECT_THROW(fit_decay(t, y, 0.0, 10.0), InsufficientData);
    std::vector<double> t2(50), zeros(50, 0.0);
    std::iota(t2.begin(), t2.end(), 0.0);
    EXPECT_THROW(fit_decay(t2, zeros, 0.0, 50.0), InsufficientData);
}

TEST(FitDecay, OuDecayRateMatchesTwiceTheDrift) {
    auto setup = ou_preset(1.0, 0.1).build().setup;
    setup.x0 = {10.0};
    const auto r = run_ensemble(setup, paths(1000, 5));
    const auto f = fit_decay(r.stats, 0.5, 2.0);
    // Euler-Maruyama contracts the mean square by (1 - a dt)^2 per step.
    EXPECT_NEAR(f.rate, 2.0 * std::log(0.99) / 0.01, 0.05);
    EXPECT_GT(f.r_squared, 0.99);
}

TEST(FitDecay, SatelliteDecaysFasterThanLambda) {
    const auto r = run_ensemble(satellite().setup, paths(100, 42));
    const auto f = fit_decay(r.stats);
    EXPECT_LE(f.rate, -0.1);
}

TEST(TheoremCheck, SatellitePassesWithClaimedConstants) {
    const auto report = report_from_claims(satellite().config);
    ASSERT_TRUE(report);
    const auto bounds = theorem_bounds(*report, 0.1, 0.8, 0.0, 13.0);
    const auto r = run_ensemble(satellite().setup, paths(100, 42));
    for (const auto& c : theorem_check(r.stats, bounds, 0.1)) EXPECT_TRUE(c.pass) << c.claim << " " << c.note;
}

TEST(TheoremCheck, ZeroTrajectoryPasses) {
    SimulationSetup s = satellite().setup;
    s.x0 = {0.0, 0.0};
    const auto report = report_from_claims(satellite().config);
    const auto bounds = theorem_bounds(*report, 0.1, 0.8, 0.0, 0.0);
    const auto r = run_ensemble(s, paths(10));
    for (const auto& c : theorem_check(r.stats, bounds, 0.1)) EXPECT_TRUE(c.pass) << c.claim;
}

TEST(TheoremCheck, DetectsBoundViolation) {
    const auto report = report_from_claims(satellite().config);
    auto bounds = theorem_bounds(*report, 0.1, 0.8, 0.0, 13.0);
    bounds.K = 1.0;  // below |x0|^2, so t = 0 already violates
    const auto r = run_ensemble(satellite().setup, paths(20, 42));
    const auto checks = theorem_check(r.stats, bounds, 0.1);
    ASSERT_FALSE(checks.empty());
    EXPECT_FALSE(checks.front().pass);
    EXPECT_GT(checks.front().worst_ratio, 1.0);
}

TEST(Replay, LoggedEventsAndControlsAreConsistent) {
    const auto& p = satellite();
    const auto r = run_ensemble(p.setup, paths(100, 42));
    for (const auto& path : r.paths) {
        ASSERT_TRUE(replay_trigger_consistency(path, p.setup.trigger).empty());
        ASSERT_TRUE(replay_controls(path, p.setup.controller).empty());
    }
}

TEST(Replay, TamperedLogIsReported) {
    const auto& p = satellite();
    auto path = run_ensemble(p.setup, paths(1, 42)).paths.front();
    ASSERT_GE(path.events.size(), 2u);
    path.events[1].step += 1;
    path.events[1].time = p.setup.grid.time(path.events[1].step);
    EXPECT_FALSE(replay_trigger_consistency(path, p.setup.trigger).empty());
}

TEST(EventStatistics, NoZenoFullCycleAtLeastTau) {
    for (double tau : {0.2, 0.5, 1.0}) {
        const auto r = run_ensemble(satellite_with(tau), paths(200, 8));
        for (const auto& path : r.paths) {
            const auto m = min_inter_event(path.events);
            ASSERT_GE(m.primary_dwell, tau - 1e-12);
            ASSERT_GE(m.full_cycle, tau - 1e-12);
        }
        if (r.stats.events.full_cycle.count > 0) EXPECT_GE(r.stats.events.full_cycle.min, tau - 1e-12);
    }
}

TEST(EventStatistics, TriggersPerPathCountsSwitchesAfterEntry) {
    const auto r = run_ensemble(satellite().setup, paths(30, 42));
    double total = 0.0;
    for (const auto& path : r.paths) total += static_cast<double>(path.events.size() - 1);
    EXPECT_NEAR(r.stats.events.triggers_per_path.mean, total / 30.0, 1e-12);
}

// Monotone only once Monte Carlo noise is small; 2000 paths is enough here.
TEST(EventStatistics, DutyCycleNonDecreasingInTau) {
    double prev = 0.0;
    for (double tau : {0.1, 0.5, 1.0, 2.0}) {
        const auto r = run_ensemble(satellite_with(tau), paths(2000, 42));
        EXPECT_GE(r.stats.events.duty_cycle_mean, prev) << tau;
        prev = r.stats.events.duty_cycle_mean;
    }
}

TEST(EventStatistics, SmallerLowerThresholdLengthensPrimaryDwell) {
    const auto a = run_ensemble(satellite_with(0.5, 0.5), paths(500, 42));
    const auto b = run_ensemble(satellite_with(0.5, 0.2), paths(500, 42));
    EXPECT_GT(b.stats.events.primary_dwell.mean, a.stats.events.primary_dwell.mean);
}
