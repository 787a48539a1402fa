#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "femam/diagnostics.hpp"
#include "femam/error.hpp"

using namespace femam;

namespace {

ClientRoundTrace row(std::size_t round, std::size_t client, int group, double weight) {
  ClientRoundTrace t;
  t.level = 1;
  t.round = round;
  t.client = client;
  t.group = group;
  t.weight = weight;
  t.lr_bound = std::numeric_limits<double>::infinity();
  return t;
}

RoundMetrics cluster_round(std::size_t round, double F) {
  RoundMetrics r;
  r.round = round;
  r.level = 1;
  r.kind = LevelKind::cluster;
  r.F = F;
  return r;
}

}  // namespace

TEST(Diagnostics, ConstantsAreMaxima) {
  std::vector<ClientRoundTrace> tr{row(0, 0, 0, 1), row(0, 1, 0, 1)};
  tr[0].max_minibatch_norm = 3;
  tr[1].max_minibatch_norm = 5;
  tr[0].b_ratio = 0.7;
  tr[1].max_deviation_sq = 2;
  tr[0].max_secant = 9;
  const auto c = estimate_constants(tr);
  EXPECT_EQ(c.U, 5);
  EXPECT_EQ(c.B, 0.7);
  EXPECT_EQ(c.sigma2, 2);
  EXPECT_EQ(c.beta, 9);
}

TEST(Diagnostics, DissimilarityPerGroup) {
  std::vector<ClientRoundTrace> tr{row(0, 0, 0, 1), row(0, 1, 0, 3), row(0, 2, 1, 1)};
  const std::vector<ParamVector> g{ParamVector(std::vector<double>{4, 0}), ParamVector(std::vector<double>{0, 0}),
                                   ParamVector(std::vector<double>{0, 0})};
  fill_dissimilarity(tr, g);
  // group 0 mean = (1*4 + 3*0)/4 = (1, 0)
  EXPECT_DOUBLE_EQ(tr[0].b_ratio, 3.0);
  EXPECT_DOUBLE_EQ(tr[1].b_ratio, 1.0);
  EXPECT_DOUBLE_EQ(tr[2].b_ratio, 0.0);
  EXPECT_THROW(fill_dissimilarity(tr, std::span<const ParamVector>(g).first(2)), Error);
}

TEST(Diagnostics, BoundsAndViolations) {
  std::vector<RoundMetrics> rounds{cluster_round(0, 5), cluster_round(1, 4), cluster_round(2, 4.5)};
  rounds.insert(rounds.begin(), RoundMetrics{});  // a global round is ignored
  rounds[0].round = 99;
  std::vector<ClientRoundTrace> tr{row(0, 0, 0, 1), row(0, 1, 0, 1), row(1, 0, 0, 1)};
  tr[0].lr_bound = 0.5;
  tr[0].lr_applied = 0.1;
  tr[1].lr_bound = 0.2;
  tr[1].lr_applied = 0.1;
  tr[2].lr_bound = 0.05;
  tr[2].lr_applied = 0.1;
  const auto d = analyze_run(rounds, tr);
  EXPECT_EQ(d.rounds, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(d.theorem1_bound[0], 0.2);
  EXPECT_DOUBLE_EQ(d.theorem1_bound[1], 0.05);
  EXPECT_EQ(d.violation_rounds, std::vector<std::size_t>{1});
  EXPECT_FALSE(d.F_monotone);
  EXPECT_EQ(d.F_increase_rounds, std::vector<std::size_t>{2});
}

TEST(Diagnostics, MonotoneWithinToleranceAndAcrossLevels) {
  std::vector<RoundMetrics> rounds{cluster_round(0, 5), cluster_round(1, 5 + 1e-12), cluster_round(2, 1)};
  RoundMetrics next = cluster_round(3, 7);  // a new level may start higher
  next.level = 2;
  rounds.push_back(next);
  const auto d = analyze_run(rounds, {});
  EXPECT_TRUE(d.F_monotone);
  EXPECT_TRUE(d.violation_rounds.empty());
}
