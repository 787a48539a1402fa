#include <gtest/gtest.h>

#include <random>

#include "femam/error.hpp"
#include "femam/metrics.hpp"
#include "femam/rng.hpp"

using namespace femam;

TEST(Metrics, Accuracy) {
  const std::vector<int> y{0, 1, 2, 2};
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 2, 0}, y), 75.0);
  EXPECT_DOUBLE_EQ(accuracy(y, y), 100.0);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), Error);
  EXPECT_THROW(accuracy(std::vector<int>{0}, y), Error);
}

TEST(Metrics, MacroF1Frozen) {
  // reference values from sklearn f1_score(average="macro")
  EXPECT_NEAR(macro_f1(std::vector<int>{0, 1, 1, 1, 2, 0, 3}, std::vector<int>{0, 0, 1, 1, 2, 2, 3}, 4),
              0.7416666666666667, 1e-12);
  EXPECT_NEAR(macro_f1(std::vector<int>{0, 0, 2}, std::vector<int>{0, 0, 1}, 5), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(macro_f1(std::vector<int>{3, 3}, std::vector<int>{3, 3}, 10), 1.0);
  EXPECT_THROW(macro_f1(std::vector<int>{4}, std::vector<int>{0}, 4), Error);
}

TEST(Metrics, SummarizeWeightsBySamples) {
  const std::vector<std::vector<int>> pred{{0, 0, 0}, {1}};
  const std::vector<std::vector<int>> lab{{0, 0, 0}, {0}};
  const EvalResult r = summarize(pred, lab, 2);
  EXPECT_DOUBLE_EQ(r.overall_accuracy, 75.0);
  EXPECT_EQ(r.client_accuracy, (std::vector<double>{100.0, 0.0}));
  EXPECT_DOUBLE_EQ(r.mean_macro_f1, 0.5);
  EXPECT_EQ(r.client_weight, (std::vector<double>{3.0, 1.0}));
}

TEST(Metrics, AdjustedRandIndexFrozen) {
  const std::vector<int> a{0, 0, 0, 1, 1, 1, 2, 2};
  const std::vector<int> b{1, 1, 0, 0, 2, 2, 2, 2};
  EXPECT_NEAR(adjusted_rand_index(a, b), 0.18181818181818182, 1e-12);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(std::vector<int>{0, 0, 1, 1}, std::vector<int>{5, 5, 7, 7}), 1.0);
  EXPECT_NEAR(adjusted_rand_index(std::vector<int>{0, 1, 0, 1}, std::vector<int>{0, 0, 1, 1}), -0.5, 1e-12);
  EXPECT_THROW(adjusted_rand_index(a, std::vector<int>{0}), Error);
}

TEST(Metrics, AdjustedRandIndexSymmetricAndRelabelInvariant) {
  Rng rng(3);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(30), b(30), c(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = pick(rng);
      b[i] = pick(rng);
      c[i] = 10 - a[i];
    }
    EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(b, a), 1e-12);
    EXPECT_NEAR(adjusted_rand_index(c, b), adjusted_rand_index(a, b), 1e-12);
    EXPECT_NEAR(adjusted_rand_index(a, c), 1.0, 1e-12);
  }
}

TEST(Metrics, PopulationVariance) {
  EXPECT_DOUBLE_EQ(population_variance(std::vector<double>{1, 2, 3, 10}), 12.5);
  EXPECT_DOUBLE_EQ(population_variance(std::vector<double>{4, 4, 4}), 0.0);
}
