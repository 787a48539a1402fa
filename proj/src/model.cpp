#include "femam/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "femam/error.hpp"
#include "femam/rng.hpp"

namespace femam {

double squared_norm(const ParamVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return s;
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
  if (a.dim() != b.dim()) throw Error("squared_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool all_finite(const ParamVector& v) {
  return std::all_of(v.values.begin(), v.values.end(), [](double x) { return std::isfinite(x); });
}

std::size_t PredictorSpec::param_dim() const {
  switch (kind) {
    case PredictorKind::linear_softmax:
      return num_classes * input_dim + num_classes;
    case PredictorKind::one_hidden_layer:
      return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
  }
  return 0;
}

void PredictorSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model.input_dim must be positive");
  if (num_classes == 0) throw ConfigError("model.num_classes must be positive");
  if (kind == PredictorKind::one_hidden_layer && hidden_dim == 0)
    throw ConfigError("model.hidden_dim must be positive for one-hidden-layer");
}

Batch gather(const Batch& batch, std::span<const std::size_t> rows) {
  Batch out;
  out.features = gather_rows(batch.features, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(batch.labels[r]);
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

namespace {

void check_dim(const ParamVector& model, const PredictorSpec& spec, std::size_t level) {
  if (model.dim() != spec.param_dim()) throw DimensionError(level, spec.param_dim(), model.dim());
}

// out[s][o] += b[o] + sum_j W[o][j] * in[s][j]
void affine_accumulate(const Matrix& in, const double* W, const double* b, std::size_t out_dim,
                       Matrix& out) {
  const std::size_t in_dim = in.cols;
  for (std::size_t s = 0; s < in.rows; ++s) {
    const double* x = in.data.data() + s * in_dim;
    double* z = out.data.data() + s * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* w = W + o * in_dim;
      double acc = b[o];
      for (std::size_t j = 0; j < in_dim; ++j) acc += w[j] * x[j];
      z[o] += acc;
    }
  }
}

Matrix hidden_activations(const Matrix& features, const ParamVector& model,
                          const PredictorSpec& spec) {
  const double* W1 = model.values.data();
  const double* b1 = W1 + spec.hidden_dim * spec.input_dim;
  Matrix h(features.rows, spec.hidden_dim);
  affine_accumulate(features, W1, b1, spec.hidden_dim, h);
  for (double& v : h.data) v = std::tanh(v);
  return h;
}

void forward_accumulate(const Matrix& features, const ParamVector& model, const PredictorSpec& spec,
                        Matrix& out) {
  if (spec.kind == PredictorKind::linear_softmax) {
    const double* W = model.values.data();
    const double* b = W + spec.num_classes * spec.input_dim;
    affine_accumulate(features, W, b, spec.num_classes, out);
    return;
  }
  const Matrix h = hidden_activations(features, model, spec);
  const double* W2 = model.values.data() + spec.hidden_dim * spec.input_dim + spec.hidden_dim;
  const double* b2 = W2 + spec.num_classes * spec.hidden_dim;
  affine_accumulate(h, W2, b2, spec.num_classes, out);
}

// Softmax of each row, in place; returns the summed negative log-likelihood.
double softmax_rows(Matrix& logits, std::span<const int> labels) {
  double nll = 0.0;
  for (std::size_t s = 0; s < logits.rows; ++s) {
    auto z = logits.row(s);
    const double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - mx);
    const double log_denom = std::log(denom) + mx;
    nll += log_denom - z[static_cast<std::size_t>(labels[s])];
    for (double& v : z) v = std::exp(v - log_denom);
  }
  return nll;
}

// d(loss)/d(W, b) for an affine layer given upstream gradient dz.
void affine_grad(const Matrix& in, const Matrix& dz, double* gW, double* gb) {
  const std::size_t in_dim = in.cols;
  const std::size_t out_dim = dz.cols;
  for (std::size_t s = 0; s < in.rows; ++s) {
    const double* x = in.data.data() + s * in_dim;
    const double* d = dz.data.data() + s * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double g = d[o];
      if (g == 0.0) continue;
      double* w = gW + o * in_dim;
      for (std::size_t j = 0; j < in_dim; ++j) w[j] += g * x[j];
      gb[o] += g;
    }
  }
}

}  // namespace

Matrix forward(const Matrix& features, const ParamVector& model, const PredictorSpec& spec) {
  check_dim(model, spec, 0);
  Matrix out(features.rows, spec.num_classes);
  forward_accumulate(features, model, spec, out);
  return out;
}

Matrix predict_additive(const Matrix& features, std::span<const ParamVector> models,
                        const PredictorSpec& spec) {
  for (std::size_t l = 0; l < models.size(); ++l) check_dim(models[l], spec, l);
  Matrix out(features.rows, spec.num_classes);
  for (const auto& m : models) {
    Matrix level(features.rows, spec.num_classes);
    forward_accumulate(features, m, spec, level);
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += level.data[k];
  }
  return out;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows == 0) throw Error("cross_entropy: empty batch");
  Matrix work = logits;
  return softmax_rows(work, labels) / static_cast<double>(logits.rows);
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t s = 0; s < logits.rows; ++s) {
    auto z = logits.row(s);
    out[s] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

LossGrad loss_and_grad_offset(const Batch& batch, const Matrix& offset, const ParamVector& model,
                              const PredictorSpec& spec) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error("loss_and_grad: empty batch");
  check_dim(model, spec, 0);

  Matrix h;
  if (spec.kind == PredictorKind::one_hidden_layer) h = hidden_activations(batch.features, model, spec);

  Matrix z = offset.empty() ? Matrix(n, spec.num_classes) : offset;
  if (spec.kind == PredictorKind::linear_softmax) {
    const double* W = model.values.data();
    affine_accumulate(batch.features, W, W + spec.num_classes * spec.input_dim, spec.num_classes, z);
  } else {
    const double* W2 = model.values.data() + spec.hidden_dim * spec.input_dim + spec.hidden_dim;
    affine_accumulate(h, W2, W2 + spec.num_classes * spec.hidden_dim, spec.num_classes, z);
  }

  LossGrad out;
  out.loss = softmax_rows(z, batch.labels) / static_cast<double>(n);
  // z now holds probabilities; turn it into d(loss)/d(logits).
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto r = z.row(s);
    r[static_cast<std::size_t>(batch.labels[s])] -= 1.0;
    for (double& v : r) v *= inv_n;
  }

  out.grad = ParamVector(model.dim());
  double* g = out.grad.values.data();
  if (spec.kind == PredictorKind::linear_softmax) {
    affine_grad(batch.features, z, g, g + spec.num_classes * spec.input_dim);
    return out;
  }

  const std::size_t H = spec.hidden_dim;
  const std::size_t C = spec.num_classes;
  double* gW1 = g;
  double* gb1 = gW1 + H * spec.input_dim;
  double* gW2 = gb1 + H;
  double* gb2 = gW2 + C * H;
  affine_grad(h, z, gW2, gb2);

  const double* W2 = model.values.data() + H * spec.input_dim + H;
  Matrix da(n, H);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = z(s, c);
      if (d == 0.0) continue;
      const double* w = W2 + c * H;
      for (std::size_t j = 0; j < H; ++j) da(s, j) += d * w[j];
    }
    for (std::size_t j = 0; j < H; ++j) da(s, j) *= 1.0 - h(s, j) * h(s, j);
  }
  affine_grad(batch.features, da, gW1, gb1);
  return out;
}

LossGrad loss_and_grad(const Batch& batch, std::span<const ParamVector> models,
                       const PredictorSpec& spec, std::size_t trainable_level) {
  if (trainable_level >= models.size()) throw Error("loss_and_grad: trainable level out of range");
  if (batch.size() == 0) throw Error("loss_and_grad: empty batch");
  for (std::size_t l = 0; l < models.size(); ++l) check_dim(models[l], spec, l);
  Matrix offset(batch.size(), spec.num_classes);
  for (std::size_t l = 0; l < models.size(); ++l) {
    if (l != trainable_level) forward_accumulate(batch.features, models[l], spec, offset);
  }
  return loss_and_grad_offset(batch, offset, models[trainable_level], spec);
}

ParamVector init_params(const PredictorSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ParamVector p(spec.param_dim());
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t i = begin; i < begin + count; ++i) p[i] = dist(rng);
  };
  if (spec.kind == PredictorKind::linear_softmax) {
    fill(0, spec.param_dim(), spec.input_dim);
  } else {
    const std::size_t first = spec.hidden_dim * spec.input_dim + spec.hidden_dim;
    fill(0, first, spec.input_dim);
    fill(first, spec.param_dim() - first, spec.hidden_dim);
  }
  return p;
}

ParamVector init_near_zero(const PredictorSpec& spec, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  ParamVector p(spec.param_dim());
  if (scale > 0.0)
    for (double& v : p.values) v = dist(rng);
  return p;
}

double gradient_norm_bound(const PredictorSpec& spec, const Matrix& features) {
  if (spec.kind != PredictorKind::linear_softmax) return -1.0;
  double max_sq = 0.0;
  for (std::size_t s = 0; s < features.rows; ++s) {
    double sq = 1.0;
    for (double v : features.row(s)) sq += v * v;
    max_sq = std::max(max_sq, sq);
  }
  return std::sqrt(2.0 * max_sq);
}

}  // namespace femam
