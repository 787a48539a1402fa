#include <benchmark/benchmark.h>

#include "femam/baselines.hpp"
#include "femam/datagen.hpp"
#include "femam/engine.hpp"

namespace {

using namespace femam;

std::vector<ClientShard> bench_shards(std::size_t clients) {
  DatasetSpec d;
  d.num_classes = 10;
  d.samples_per_class = 60 * clients / 10;
  d.input_dim = 32;
  d.seed = 1;
  PartitionSpec p;
  p.kind = PartitionKind::dirichlet;
  p.alpha = 0.5;
  p.num_clients = clients;
  p.seed = 1;
  const Batch table = generate_dataset(d);
  return make_client_shards(table, make_partition(table, d.num_classes, p), p.val_fraction, p.test_fraction, 1);
}

PredictorSpec bench_spec(bool mlp) {
  PredictorSpec s;
  s.input_dim = 32;
  s.num_classes = 10;
  if (mlp) {
    s.kind = PredictorKind::one_hidden_layer;
    s.hidden_dim = 32;
  }
  return s;
}

// Ten FedAvg rounds: the per-client local-update fan-out dominates.
void BM_FedAvgRounds(benchmark::State& state) {
  const auto shards = bench_shards(static_cast<std::size_t>(state.range(0)));
  const PredictorSpec spec = bench_spec(state.range(2) != 0);
  BaselineConfig cfg;
  cfg.rounds = 10;
  cfg.exec = state.range(1) ? Exec::parallel : Exec::serial;
  for (auto _ : state) benchmark::DoNotOptimize(run_fedavg(shards, spec, cfg));
  state.SetLabel(state.range(1) ? "parallel" : "serial");
}

// One cluster level with gradient tracing on.
void BM_FeMAMClusterLevel(benchmark::State& state) {
  const auto shards = bench_shards(static_cast<std::size_t>(state.range(0)));
  const PredictorSpec spec = bench_spec(false);
  EngineConfig cfg;
  cfg.schedule = {LevelKind::global, LevelKind::cluster};
  cfg.level1_rounds = 5;
  cfg.max_rounds_per_level = 5;
  cfg.exec = state.range(1) ? Exec::parallel : Exec::serial;
  for (auto _ : state) benchmark::DoNotOptimize(run_femam(shards, spec, cfg));
  state.SetLabel(state.range(1) ? "parallel" : "serial");
}

}  // namespace

BENCHMARK(BM_FedAvgRounds)->ArgsProduct({{20, 50}, {0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeMAMClusterLevel)->ArgsProduct({{20, 50}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
