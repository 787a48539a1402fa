#include <gtest/gtest.h>

#include "femam/baselines.hpp"
#include "femam/error.hpp"
#include "femam/rng.hpp"
#include "support.hpp"

using namespace femam;
using namespace femam::testing;

namespace {

BaselineConfig base(const std::string& algo, std::size_t rounds = 5) {
  BaselineConfig b;
  b.algorithm = algo;
  b.rounds = rounds;
  b.lr = 0.1;
  b.local_epochs = 1;
  b.batch_size = 16;
  b.clusters = 2;
  b.finetune_epochs = 1;
  b.seed = 11;
  return b;
}

}  // namespace

TEST(Baselines, Names) {
  for (const char* a : {"local", "fedavg", "fedavg+", "fesem", "fesem+"}) EXPECT_TRUE(is_baseline(a));
  EXPECT_FALSE(is_baseline("femam"));
  EXPECT_FALSE(is_baseline("local+"));
  const Scenario sc = small_scenario();
  EXPECT_THROW(run_baseline(sc.shards, sc.spec, base("fedprox")), ConfigError);
  EXPECT_THROW(run_baseline(sc.shards, sc.spec, base("fedavg", 0)), ConfigError);
}

TEST(Baselines, LocalMatchesHandRolledLoop) {
  const Scenario sc = small_scenario();
  const BaselineConfig cfg = base("local", 3);
  const RunRecord rec = run_local(sc.shards, sc.spec, cfg);
  const ParamVector init = init_params(sc.spec, derive_seed(cfg.seed, Stream::init, {0, 0}));
  for (std::size_t i = 0; i < sc.shards.size(); ++i) {
    ParamVector p = init;
    for (std::size_t r = 0; r < 3; ++r)
      p = local_update_global(sc.shards[i].train, Matrix(), p, sc.spec, {cfg.lr, 1, 16},
                              derive_seed(cfg.seed, Stream::shuffle, {0, r, i}));
    ASSERT_EQ(rec.client_models[i].size(), 1u);
    EXPECT_EQ(rec.client_models[i][0], p);
  }
  for (const auto& r : rec.rounds) {
    EXPECT_EQ(r.transfers, 0u);
    EXPECT_EQ(r.active_clients, 0u);
  }
}

TEST(Baselines, FedAvgFirstRoundIsWeightedMean) {
  const Scenario sc = small_scenario();
  const BaselineConfig cfg = base("fedavg", 1);
  const RunRecord rec = run_fedavg(sc.shards, sc.spec, cfg);
  const ParamVector init = init_params(sc.spec, derive_seed(cfg.seed, Stream::init, {0, 0}));
  std::vector<ParamVector> local;
  std::vector<double> n;
  for (std::size_t i = 0; i < sc.shards.size(); ++i) {
    local.push_back(local_update_global(sc.shards[i].train, Matrix(), init, sc.spec, {cfg.lr, 1, 16},
                                        derive_seed(cfg.seed, Stream::shuffle, {0, 0, i})));
    n.push_back(static_cast<double>(sc.shards[i].n()));
  }
  LevelBank b;
  b.models = {init};
  const LevelBank expect = aggregate(b, constant_mapping(local.size(), 0), local, n);
  EXPECT_EQ(rec.banks.at(0).models, expect.models);
  EXPECT_EQ(rec.rounds[0].transfers, 2 * sc.shards.size());
  for (const auto& models : rec.client_models) EXPECT_EQ(models[0], expect.models[0]);
}

TEST(Baselines, FesemSingleClusterEqualsFedAvg) {
  const Scenario sc = small_scenario();
  BaselineConfig s = base("fesem");
  s.clusters = 1;
  s.lambda = 0.0;
  s.weight_by_share = false;
  const RunRecord a = run_fesem(sc.shards, sc.spec, s);
  const RunRecord b = run_fedavg(sc.shards, sc.spec, base("fedavg"));
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  for (std::size_t k = 0; k < a.rounds.size(); ++k) EXPECT_EQ(a.rounds[k].accuracy, b.rounds[k].accuracy);
  EXPECT_EQ(a.banks[0].models, b.banks[0].models);
}

TEST(Baselines, FesemMappingAndObjective) {
  const Scenario sc = small_scenario(8, 3);
  const RunRecord rec = run_fesem(sc.shards, sc.spec, base("fesem", 6));
  ASSERT_EQ(rec.structure.num_levels(), 1u);
  for (int c : rec.structure.cells[0]) {
    EXPECT_GE(c, 0);
    EXPECT_LT(c, 2);
  }
  EXPECT_EQ(rec.mapping_log.size(), 6u);
  EXPECT_EQ(rec.mapping_log.back().row, rec.structure.cells[0]);
  for (const auto& r : rec.rounds) {
    EXPECT_GE(r.F, 0.0);
    EXPECT_EQ(r.kind, LevelKind::cluster);
  }
}

TEST(Baselines, SerialMatchesParallel) {
  const Scenario sc = small_scenario(8, 4);
  for (const char* algo : {"local", "fedavg", "fesem+"}) {
    BaselineConfig a = base(algo);
    a.exec = Exec::serial;
    BaselineConfig b = a;
    b.exec = Exec::parallel;
    const RunRecord x = run_baseline(sc.shards, sc.spec, a);
    const RunRecord y = run_baseline(sc.shards, sc.spec, b);
    EXPECT_EQ(x.client_models, y.client_models) << algo;
    EXPECT_EQ(x.final_eval.overall_accuracy, y.final_eval.overall_accuracy) << algo;
  }
}

TEST(Baselines, FinetuneKeepsHistoryAndPersonalizes) {
  const Scenario sc = small_scenario();
  const RunRecord plain = run_baseline(sc.shards, sc.spec, base("fedavg"));
  const RunRecord plus = run_baseline(sc.shards, sc.spec, base("fedavg+"));
  EXPECT_EQ(plus.algorithm, "fedavg+");
  ASSERT_EQ(plain.rounds.size(), plus.rounds.size());
  for (std::size_t k = 0; k < plain.rounds.size(); ++k) EXPECT_EQ(plain.rounds[k].accuracy, plus.rounds[k].accuracy);
  EXPECT_NE(plus.client_models[0].back(), plus.client_models[1].back());

  const RunRecord none = finetune_plus(plain, sc.shards, sc.spec, base("fedavg+"), 0);
  EXPECT_EQ(none.client_models, plain.client_models);
  EXPECT_EQ(none.final_eval.overall_accuracy, plain.final_eval.overall_accuracy);
}

TEST(Baselines, Deterministic) {
  const Scenario sc = small_scenario();
  const RunRecord a = run_baseline(sc.shards, sc.spec, base("fesem+"));
  const RunRecord b = run_baseline(sc.shards, sc.spec, base("fesem+"));
  EXPECT_EQ(a.client_models, b.client_models);
  EXPECT_EQ(a.structure.cells, b.structure.cells);
}
