#include <benchmark/benchmark.h>

#include "probe/bench.hpp"
#include "probe/rng.hpp"

namespace {

using namespace probe;

const Scenario& nominal_scenario() {
  static const Scenario sc = build_scenario(ExperimentConfig{}, sweep_grid(ExperimentConfig{}).front());
  return sc;
}

void BM_MatchedFilter(benchmark::State& state) {
  const Scenario& sc = nominal_scenario();
  const std::size_t cycles = static_cast<std::size_t>(state.range(0));
  Signal e(cycles * sc.spc);
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : e) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(matched_filter(e, sc.profile, sc.spc));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cycles));
}
BENCHMARK(BM_MatchedFilter)->Arg(13000)->Unit(benchmark::kMillisecond);

void BM_PhysicalSimulation(benchmark::State& state) {
  const Scenario& sc = nominal_scenario();
  const BitSequence bits = generate_bits(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(impacts_physical(bits, sc.dss, sc.params, sc.media, sc.setup, sc.noise, 11));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PhysicalSimulation)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Viterbi(benchmark::State& state) {
  const Scenario& sc = nominal_scenario();
  ExperimentConfig cfg;
  cfg.source = ImpactSource::synthetic;
  cfg.detectors = {"viterbi"};
  cfg.training_bits = 5000;
  const ImpactSourceModel src = prepare_impact_source(cfg, sc, 5);
  const TrainedDetectors trained = train_detectors(cfg, sc, src, 6);
  const BranchMetric metric(*trained.trellis);
  const BlockLayout layout = block_layout(sc, cfg, static_cast<std::size_t>(state.range(0)));
  const BitSequence bits = block_bits(layout, 0.5, 8);
  const BlockSignals sig = simulate_block(sc, src, bits, 9);
  const std::span<const std::uint8_t> preamble(bits.data(), layout.preamble);
  for (auto _ : state) benchmark::DoNotOptimize(viterbi_detect(sig.whitened, metric, preamble));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Viterbi)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
