#include <benchmark/benchmark.h>

#include "quota/deepagents.hpp"
#include "quota/sweep.hpp"

using namespace quota;

namespace {

harness::ExperimentConfig sweep_config() {
  harness::ExperimentConfig cfg;
  cfg.sweep.lengths = {6, 10};
  cfg.sweep.trials = 4;
  return cfg;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto cfg = sweep_config();
  const auto cells = harness::enumerate_cells(cfg.sweep, cfg.seed);
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_cells_serial(cells, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cells.size()));
}

void BM_SweepParallel(benchmark::State& state) {
  const auto cfg = sweep_config();
  const auto cells = harness::enumerate_cells(cfg.sweep, cfg.seed);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_cells(cells, cfg, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cells.size()));
}

struct SegmentFixture {
  env::ChainConfig chain{5, env::ChainVariant::chain1};
  deep::QuantileNet net;
  deep::BehaviourPolicy policy;

  SegmentFixture() {
    const std::size_t hidden[] = {64, 64};
    net = deep::QuantileNet(5, 2, 5, hidden, 0);
    Rng rng(1);
    net.initialize(rng);
    policy = [this](std::span<const double> obs, tabular::OptionState&, Rng& r) {
      return deep::Decision{deep::qr_dqn_act(net, obs, 0.1, r), 0, 0};
    };
  }
};

void BM_SegmentsSerial(benchmark::State& state) {
  SegmentFixture fx;
  deep::WorkerPool pool(fx.chain, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(deep::collect_segments_serial(pool, fx.policy, 5));
}

void BM_SegmentsParallel(benchmark::State& state) {
  SegmentFixture fx;
  deep::WorkerPool pool(fx.chain, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(deep::collect_segments(pool, fx.policy, 5));
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SegmentsSerial)->Arg(8)->Arg(16);
BENCHMARK(BM_SegmentsParallel)->Arg(8)->Arg(16);

BENCHMARK_MAIN();
