#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace femam {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  bool empty() const { return rows == 0; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Flat parameter vector of one model: the unit of broadcast, aggregation and distance.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values(dim, fill) {}
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dim() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

double squared_norm(const ParamVector& v);
double squared_distance(const ParamVector& a, const ParamVector& b);
bool all_finite(const ParamVector& v);

enum class PredictorKind { linear_softmax, one_hidden_layer };

struct PredictorSpec {
  PredictorKind kind = PredictorKind::linear_softmax;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // 0 for linear
  std::size_t num_classes = 2;

  /// Number of parameters one model of this spec carries.
  std::size_t param_dim() const;
  void validate() const;
};

struct Batch {
  Matrix features;          // samples x input_dim
  std::vector<int> labels;  // class ids in [0, num_classes)

  std::size_t size() const { return labels.size(); }
};

/// Gathers the listed rows of `batch` into a new batch.
Batch gather(const Batch& batch, std::span<const std::size_t> rows);
/// Gathers rows of a logits matrix.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

/// Single-model forward pass: samples x num_classes logits.
Matrix forward(const Matrix& features, const ParamVector& model, const PredictorSpec& spec);

/// Sum of every model's logits; all-zero when `models` is empty.
/// Throws DimensionError naming the first level whose dimension is wrong.
Matrix predict_additive(const Matrix& features, std::span<const ParamVector> models,
                        const PredictorSpec& spec);

/// Mean cross-entropy of logits against labels.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

std::vector<int> argmax_rows(const Matrix& logits);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Loss and gradient for one trainable model whose logits are added to a
/// constant offset (the frozen levels' contribution). `offset` may be empty,
/// meaning zero.
LossGrad loss_and_grad_offset(const Batch& batch, const Matrix& offset, const ParamVector& model,
                              const PredictorSpec& spec);

/// Mean cross-entropy of the additive prediction and its gradient with respect
/// to `models[trainable_level]` only; the other levels are frozen.
LossGrad loss_and_grad(const Batch& batch, std::span<const ParamVector> models,
                       const PredictorSpec& spec, std::size_t trainable_level);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
ParamVector init_params(const PredictorSpec& spec, std::uint64_t seed);

/// Uniform in [-scale, scale] on every coordinate.
ParamVector init_near_zero(const PredictorSpec& spec, std::uint64_t seed, double scale);

/// Upper bound on the Frobenius norm of the per-model gradient for any batch
/// drawn from `features`. Exact for the linear kind: ||p - y|| <= sqrt(2) and
/// the input norm is at most max ||[x, 1]||. Returns a negative value for
/// kinds without a closed form.
double gradient_norm_bound(const PredictorSpec& spec, const Matrix& features);

}  // namespace femam
