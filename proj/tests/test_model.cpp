#include <gtest/gtest.h>

#include <cmath>

#include "femam/error.hpp"
#include "femam/model.hpp"
#include "support.hpp"

using namespace femam;
using namespace femam::testing;

namespace {

double central_difference(const Batch& b, const std::vector<ParamVector>& models, const PredictorSpec& spec,
                          std::size_t level, std::size_t k, double h) {
  auto plus = models;
  auto minus = models;
  plus[level][k] += h;
  minus[level][k] -= h;
  return (cross_entropy(predict_additive(b.features, plus, spec), b.labels) -
          cross_entropy(predict_additive(b.features, minus, spec), b.labels)) /
         (2 * h);
}

}  // namespace

TEST(Model, ParamDim) {
  EXPECT_EQ(linear_spec(3, 4).param_dim(), 16u);
  EXPECT_EQ(mlp_spec(3, 5, 4).param_dim(), 5u * 3 + 5 + 4 * 5 + 4);
}

TEST(Model, LinearForwardByHand) {
  const PredictorSpec s = linear_spec(2, 2);
  // W = [[1, 2], [3, 4]], b = [0.5, -0.5]
  const ParamVector p(std::vector<double>{1, 2, 3, 4, 0.5, -0.5});
  Matrix x(1, 2);
  x(0, 0) = 1.0;
  x(0, 1) = -1.0;
  const Matrix z = forward(x, p, s);
  EXPECT_DOUBLE_EQ(z(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(z(0, 1), -1.5);
}

TEST(Model, ZeroLogitsGiveLogC) {
  const Batch b = random_batch(17, 3, 5, 3);
  EXPECT_NEAR(cross_entropy(Matrix(17, 5), b.labels), std::log(5.0), 1e-12);
}

TEST(Model, CrossEntropyStableForLargeLogits) {
  Matrix z(1, 3);
  z(0, 0) = 1000.0;
  z(0, 1) = -1000.0;
  const std::vector<int> y{0};
  EXPECT_NEAR(cross_entropy(z, y), 0.0, 1e-12);
  const std::vector<int> y1{1};
  EXPECT_NEAR(cross_entropy(z, y1), 2000.0, 1e-9);
}

TEST(Model, AdditiveIsSumOfLevels) {
  const PredictorSpec s = mlp_spec(3, 4, 3);
  const Batch b = random_batch(9, 3, 3, 5);
  const std::vector<ParamVector> models{random_params(s.param_dim(), 1), random_params(s.param_dim(), 2)};
  const Matrix sum = predict_additive(b.features, models, s);
  const Matrix a = forward(b.features, models[0], s);
  const Matrix c = forward(b.features, models[1], s);
  for (std::size_t k = 0; k < sum.data.size(); ++k) EXPECT_NEAR(sum.data[k], a.data[k] + c.data[k], 1e-12);
  EXPECT_EQ(predict_additive(b.features, {}, s), Matrix(9, 3));
}

TEST(Model, DimensionErrorNamesLevel) {
  const PredictorSpec s = linear_spec(3, 2);
  const Batch b = random_batch(4, 3, 2, 1);
  const std::vector<ParamVector> models{ParamVector(s.param_dim()), ParamVector(s.param_dim() + 1)};
  try {
    predict_additive(b.features, models, s);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.level(), 1u);
  }
}

TEST(Model, GradientMatchesFiniteDifferences) {
  for (const PredictorSpec& s : {linear_spec(4, 3), mlp_spec(4, 5, 3)}) {
    const Batch b = random_batch(11, 4, 3, 9);
    const std::vector<ParamVector> models{random_params(s.param_dim(), 1, 0.5), random_params(s.param_dim(), 2, 0.5),
                                          random_params(s.param_dim(), 3, 0.5)};
    const LossGrad lg = loss_and_grad(b, models, s, 1);
    EXPECT_NEAR(lg.loss, cross_entropy(predict_additive(b.features, models, s), b.labels), 1e-12);
    for (std::size_t k = 0; k < s.param_dim(); ++k)
      EXPECT_NEAR(lg.grad[k], central_difference(b, models, s, 1, k, 1e-6), 1e-7) << "coordinate " << k;
  }
}

TEST(Model, OffsetFormMatchesLevelForm) {
  const PredictorSpec s = linear_spec(3, 4);
  const Batch b = random_batch(8, 3, 4, 2);
  const std::vector<ParamVector> models{random_params(s.param_dim(), 4), random_params(s.param_dim(), 5)};
  const Matrix offset = forward(b.features, models[0], s);
  const LossGrad a = loss_and_grad(b, models, s, 1);
  const LossGrad c = loss_and_grad_offset(b, offset, models[1], s);
  EXPECT_DOUBLE_EQ(a.loss, c.loss);
  for (std::size_t k = 0; k < a.grad.dim(); ++k) EXPECT_DOUBLE_EQ(a.grad[k], c.grad[k]);
}

TEST(Model, InitRanges) {
  const PredictorSpec s = mlp_spec(16, 8, 3);
  const ParamVector p = init_params(s, 7);
  ASSERT_EQ(p.dim(), s.param_dim());
  for (std::size_t k = 0; k < 16 * 8 + 8; ++k) EXPECT_LE(std::abs(p[k]), 1.0 / std::sqrt(16.0));
  for (std::size_t k = 16 * 8 + 8; k < p.dim(); ++k) EXPECT_LE(std::abs(p[k]), 1.0 / std::sqrt(8.0));
  EXPECT_EQ(init_params(s, 7), p);
  EXPECT_NE(init_params(s, 8), p);
  for (double v : init_near_zero(s, 1, 1e-3).values) EXPECT_LE(std::abs(v), 1e-3);
}

TEST(Model, GradientNormBoundHoldsForLinear) {
  const PredictorSpec s = linear_spec(6, 4);
  const Batch b = random_batch(40, 6, 4, 11);
  const double U = gradient_norm_bound(s, b.features);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ParamVector p = random_params(s.param_dim(), seed, 3.0);
    const LossGrad lg = loss_and_grad_offset(b, Matrix(), p, s);
    EXPECT_LE(std::sqrt(squared_norm(lg.grad)), U);
  }
  EXPECT_LT(gradient_norm_bound(mlp_spec(6, 3, 4), b.features), 0.0);
}

TEST(Model, ArgmaxTiesToLowestIndex) {
  Matrix z(2, 3, 1.0);
  z(1, 2) = 2.0;
  EXPECT_EQ(argmax_rows(z), (std::vector<int>{0, 2}));
}

TEST(Model, SpecValidation) {
  EXPECT_THROW(linear_spec(0, 3).validate(), ConfigError);
  EXPECT_THROW(linear_spec(3, 0).validate(), ConfigError);
  EXPECT_THROW(mlp_spec(3, 0, 3).validate(), ConfigError);
}
