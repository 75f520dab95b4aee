#include <benchmark/benchmark.h>

#include "detm/ensemble.hpp"
#include "detm/lyapunov.hpp"
#include "detm/models.hpp"

using namespace detm;

namespace {

const Problem& satellite() {
    static const Problem p = satellite_preset().build();
    return p;
}

void BM_EnsembleSerial(benchmark::State& state) {
    const auto& p = satellite();
    const EnsembleOptions o{static_cast<std::size_t>(state.range(0)), 42, 0};
    for (auto _ : state) benchmark::DoNotOptimize(run_ensemble_serial(p.setup, o).stats.mean_sq.back());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EnsembleParallel(benchmark::State& state) {
    const auto& p = satellite();
    const EnsembleOptions o{static_cast<std::size_t>(state.range(0)), 42, 0};
    for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(p.setup, o).stats.mean_sq.back());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SandwichSerial(benchmark::State& state) {
    const auto& p = satellite();
    const DomainBox box{{-3.0, -3.0}, {3.0, 3.0}};
    const SamplerSpec spec{static_cast<std::size_t>(state.range(0)), 64, true, 0.0};
    for (auto _ : state) benchmark::DoNotOptimize(certify_sandwich(*p.candidate, box, spec, Execution::Serial).c1);
}

void BM_SandwichParallel(benchmark::State& state) {
    const auto& p = satellite();
    const DomainBox box{{-3.0, -3.0}, {3.0, 3.0}};
    const SamplerSpec spec{static_cast<std::size_t>(state.range(0)), 64, true, 0.0};
    for (auto _ : state) benchmark::DoNotOptimize(certify_sandwich(*p.candidate, box, spec, Execution::Parallel).c1);
}

void BM_VerifySerial(benchmark::State& state) {
    const auto in = verify_inputs(satellite());
    for (auto _ : state) benchmark::DoNotOptimize(verify_assumptions(in, Execution::Serial).c1);
}

void BM_VerifyParallel(benchmark::State& state) {
    const auto in = verify_inputs(satellite());
    for (auto _ : state) benchmark::DoNotOptimize(verify_assumptions(in, Execution::Parallel).c1);
}

}  // namespace

BENCHMARK(BM_EnsembleSerial)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleParallel)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SandwichSerial)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SandwichParallel)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VerifySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VerifyParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
