// Randomized invariant checks over many seeds.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "femam/baselines.hpp"
#include "femam/datagen.hpp"
#include "femam/engine.hpp"
#include "femam/metrics.hpp"
#include "femam/protocol.hpp"
#include "support.hpp"

using namespace femam;
using namespace femam::testing;

namespace {

struct Instance {
  LevelBank bank;
  std::vector<ParamVector> local;
  std::vector<double> n;
  MappingRow row;
};

Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
  const std::size_t K = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
  const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
  Instance in;
  in.bank.kind = LevelKind::cluster;
  for (std::size_t k = 0; k < K; ++k) in.bank.models.push_back(random_params(dim, rng()));
  for (std::size_t i = 0; i < m; ++i) {
    in.local.push_back(random_params(dim, rng()));
    in.n.push_back(std::uniform_real_distribution<double>(1.0, 50.0)(rng));
    in.row.push_back(static_cast<int>(std::uniform_int_distribution<std::size_t>(0, K - 1)(rng)));
  }
  return in;
}

double F_of(const Instance& in, const LevelBank& bank, const MappingRow& row) {
  const std::vector<LevelBank> banks{LevelBank{0, LevelKind::global, {ParamVector(in.local[0].dim())}, 0.0}, bank};
  const MappingTable map{{constant_mapping(row.size(), 0), row}};
  const std::vector<std::vector<ParamVector>> local{in.local, in.local};
  return em_objective_F(banks, map, local, in.n);
}

}  // namespace

class ProtocolProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ProtocolProperty, AggregateIsConvexCombination) {
  const Instance in = random_instance(GetParam());
  const LevelBank out = aggregate(in.bank, in.row, in.local, in.n);
  for (std::size_t k = 0; k < out.models.size(); ++k) {
    bool any = false;
    for (std::size_t j = 0; j < out.models[k].dim(); ++j) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t i = 0; i < in.local.size(); ++i)
        if (in.row[i] == static_cast<int>(k)) {
          lo = std::min(lo, in.local[i][j]);
          hi = std::max(hi, in.local[i][j]);
          any = true;
        }
      if (any) {
        EXPECT_GE(out.models[k][j], lo - 1e-12);
        EXPECT_LE(out.models[k][j], hi + 1e-12);
      }
    }
    if (!any) {
      EXPECT_EQ(out.models[k], in.bank.models[k]);
    }
  }
}

TEST_P(ProtocolProperty, AggregateOfIdenticalVectorsIsThatVector) {
  Instance in = random_instance(GetParam());
  for (auto& v : in.local) v = in.local[0];
  const LevelBank out = aggregate(in.bank, constant_mapping(in.local.size(), 0), in.local, in.n);
  for (std::size_t j = 0; j < in.local[0].dim(); ++j) EXPECT_NEAR(out.models[0][j], in.local[0][j], 1e-12);
}

TEST_P(ProtocolProperty, AssignmentIsIdempotentAndNearest) {
  const Instance in = random_instance(GetParam());
  const MappingRow a = assign_clusters(in.bank, in.local, in.row);
  EXPECT_EQ(assign_clusters(in.bank, in.local, a), a);
  for (std::size_t i = 0; i < in.local.size(); ++i)
    for (const auto& c : in.bank.models)
      EXPECT_LE(squared_distance(in.local[i], in.bank.models[static_cast<std::size_t>(a[i])]),
                squared_distance(in.local[i], c));
}

TEST_P(ProtocolProperty, EmStepsNeverIncreaseF) {
  const Instance in = random_instance(GetParam());
  const double f0 = F_of(in, in.bank, in.row);
  const MappingRow a = assign_clusters(in.bank, in.local, in.row);
  const double f1 = F_of(in, in.bank, a);
  const double f2 = F_of(in, aggregate(in.bank, a, in.local, in.n), a);
  EXPECT_GE(f0, 0.0);
  EXPECT_LE(f1, f0 * (1 + 1e-12));
  EXPECT_LE(f2, f1 * (1 + 1e-12));
}

TEST_P(ProtocolProperty, BroadcastIsExactCopy) {
  const Instance in = random_instance(GetParam());
  const auto got = broadcast(in.bank, in.row);
  for (std::size_t i = 0; i < in.row.size(); ++i) EXPECT_EQ(*got[i], in.bank.models[static_cast<std::size_t>(in.row[i])]);
}

TEST_P(ProtocolProperty, TheoremTwoNeverExceedsTheoremOne) {
  Rng rng(GetParam());
  std::uniform_real_distribution<double> u(0.01, 5.0);
  const double d[] = {u(rng), u(rng)};
  const double t1 = lr_bound_theorem1(d, std::floor(u(rng)) + 1, u(rng), 3);
  EXPECT_LE(lr_bound_theorem2(u(rng), u(rng), u(rng), u(rng), u(rng), t1), t1);
  EXPECT_GE(t1, 0.0);
}

TEST_P(ProtocolProperty, AdditivePredictionIsSumOfLevels) {
  Rng rng(GetParam());
  const PredictorSpec s = GetParam() % 2 ? linear_spec(3, 4) : mlp_spec(3, 5, 4);
  const Batch b = random_batch(7, 3, 4, rng());
  const std::vector<ParamVector> models{random_params(s.param_dim(), rng()), random_params(s.param_dim(), rng()),
                                        random_params(s.param_dim(), rng())};
  const Matrix sum = predict_additive(b.features, models, s);
  Matrix expect(7, 4);
  for (const auto& p : models) {
    const Matrix f = forward(b.features, p, s);
    for (std::size_t k = 0; k < f.data.size(); ++k) expect.data[k] += f.data[k];
  }
  for (std::size_t k = 0; k < sum.data.size(); ++k) EXPECT_NEAR(sum.data[k], expect.data[k], 1e-12);
}

TEST_P(ProtocolProperty, AriBoundsAndSelfAgreement) {
  Rng rng(GetParam());
  std::vector<int> a(15), b(15);
  for (auto& x : a) x = static_cast<int>(rng() % 4);
  for (auto& x : b) x = static_cast<int>(rng() % 3);
  const double ari = adjusted_rand_index(a, b);
  EXPECT_GE(ari, -1.0);
  EXPECT_LE(ari, 1.0);
  if (std::set<int>(a.begin(), a.end()).size() > 1) {
    EXPECT_NEAR(adjusted_rand_index(a, a), 1.0, 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ProtocolProperty, ::testing::Range<std::uint64_t>(1, 41));

class PartitionProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PartitionProperty, ShardsPartitionTheTable) {
  const std::uint64_t seed = GetParam();
  DatasetSpec d;
  d.num_classes = 12;
  d.samples_per_class = 40;
  d.input_dim = 3;
  d.seed = seed;
  const Batch table = generate_dataset(d);
  std::vector<PartitionSpec> specs(4);
  specs[0].kind = PartitionKind::iid;
  specs[1].kind = PartitionKind::dirichlet;
  specs[1].alpha = 0.1 + static_cast<double>(seed % 5);
  specs[2].kind = PartitionKind::cluster_wise;
  specs[2].classes_per_cluster = 3;
  specs[2].num_clusters = 3;
  specs[3].kind = PartitionKind::multi_level;
  specs[3].levels = {{2, 1}, {1, 2}, {1, 3}};
  for (auto& p : specs) {
    p.num_clients = 6;
    p.seed = seed;
    const Partition part = make_partition(table, d.num_classes, p);
    std::vector<int> seen(table.size(), 0);
    for (const auto& rows : part.client_rows)
      for (std::size_t r : rows) ++seen[r];
    for (std::size_t r : part.unassigned) ++seen[r];
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; })) << to_string(p.kind);

    const auto shards = make_client_shards(table, part, p.val_fraction, p.test_fraction, seed);
    for (std::size_t i = 0; i < shards.size(); ++i)
      EXPECT_EQ(shards[i].train.size() + shards[i].validation.size() + shards[i].test.size(),
                part.client_rows[i].size());
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PartitionProperty, ::testing::Range<std::uint64_t>(1, 11));

class RunProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RunProperty, EngineInvariants) {
  const std::uint64_t seed = GetParam();
  const Scenario sc = small_scenario(6 + 2 * (seed % 2), seed);
  EngineConfig cfg;
  cfg.lr = 0.05 + 0.05 * static_cast<double>(seed % 3);
  cfg.batch_size = 16;
  cfg.local_epochs = 1;
  cfg.level1_rounds = 4;
  cfg.max_rounds_per_level = 4;
  cfg.window = 2;
  cfg.clusters_per_level = 1 + seed % 3;
  cfg.weight_by_share = seed % 2 == 0;
  cfg.seed = seed;
  cfg.exec = Exec::serial;
  const RunRecord rec = run_femam(sc.shards, sc.spec, cfg);
  cfg.exec = Exec::parallel;
  const RunRecord par = run_femam(sc.shards, sc.spec, cfg);
  EXPECT_EQ(rec.client_models, par.client_models);

  EXPECT_TRUE(rec.invariant_violations.empty());
  for (std::size_t i = 0; i < sc.shards.size(); ++i) {
    EXPECT_LE(rec.final_val_loss[i], rec.level1_val_loss[i]);  // exact
    EXPECT_NE(rec.structure.cells[0][i], kPruned);
  }
  for (const auto& r : rec.rounds) EXPECT_EQ(r.transfers, 2 * r.active_clients);
  for (std::size_t l = 0; l < rec.banks.size(); ++l)
    for (int c : rec.structure.cells[l])
      if (c != kPruned) {
        EXPECT_LT(static_cast<std::size_t>(c), rec.banks[l].models.size());
      }
}

TEST_P(RunProperty, BaselineTransfers) {
  const std::uint64_t seed = GetParam();
  const Scenario sc = small_scenario(6, seed);
  for (const char* algo : {"local", "fedavg+", "fesem"}) {
    BaselineConfig b;
    b.algorithm = algo;
    b.rounds = 3;
    b.lr = 0.1;
    b.clusters = 2;
    b.seed = seed;
    const RunRecord rec = run_baseline(sc.shards, sc.spec, b);
    for (const auto& r : rec.rounds) EXPECT_EQ(r.transfers, 2 * r.active_clients) << algo;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RunProperty, ::testing::Range<std::uint64_t>(1, 9));
