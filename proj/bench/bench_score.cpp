// Serial reference vs OpenMP scoring kernel on a small balance dataset.
#include <benchmark/benchmark.h>

#include "escapekit/eval.hpp"

using namespace escapekit;

namespace {

const eval::Dataset& dataset() {
  static const eval::Dataset d = eval::generate_dataset("balance", nlohmann::json::object(), 4, 10, 3);
  return d;
}

eval::ScoreConfig config() {
  eval::ScoreConfig cfg;
  cfg.M = 50;
  cfg.escape_rounds = 2;
  cfg.escape_budget = 200;
  return cfg;
}

const std::vector<eval::Metric> kMetrics = {eval::Metric::omega_cap, eval::Metric::omega_esc_rrt,
                                            eval::Metric::omega_force};

void BM_ScoreSerial(benchmark::State& state) {
  const auto cfg = config();
  for (auto _ : state) benchmark::DoNotOptimize(eval::score_dataset_serial(dataset(), kMetrics, cfg));
  state.SetItemsProcessed(state.iterations() * 40);
}

void BM_ScoreParallel(benchmark::State& state) {
  const auto cfg = config();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval::score_dataset(dataset(), kMetrics, cfg, workers));
  state.SetItemsProcessed(state.iterations() * 40);
}

}  // namespace

BENCHMARK(BM_ScoreSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ScoreParallel)->Arg(0)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
