#include "femam/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "femam/error.hpp"
#include "femam/rng.hpp"

namespace femam {

LevelKind parse_level_kind(const std::string& name) {
  if (name == "global") return LevelKind::global;
  if (name == "cluster") return LevelKind::cluster;
  if (name == "personalized") return LevelKind::personalized;
  throw ConfigError("unknown level kind '" + name + "'");
}

std::string to_string(LevelKind kind) {
  switch (kind) {
    case LevelKind::global:
      return "global";
    case LevelKind::cluster:
      return "cluster";
    case LevelKind::personalized:
      return "personalized";
  }
  return "?";
}

MappingRow identity_mapping(std::size_t num_clients) {
  MappingRow row(num_clients);
  std::iota(row.begin(), row.end(), 0);
  return row;
}

MappingRow constant_mapping(std::size_t num_clients, int model) {
  return MappingRow(num_clients, model);
}

std::vector<std::optional<ParamVector>> broadcast(const LevelBank& bank, const MappingRow& row) {
  std::vector<std::optional<ParamVector>> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] == kPruned) continue;
    out[i] = bank.models.at(static_cast<std::size_t>(row[i]));
  }
  return out;
}

LevelBank aggregate(const LevelBank& bank, const MappingRow& row,
                    std::span<const ParamVector> local, std::span<const double> counts) {
  if (local.size() != row.size() || counts.size() != row.size())
    throw Error("aggregate: local/count/mapping sizes differ");
  for (double c : counts)
    if (c < 0.0 || !std::isfinite(c)) throw Error("aggregate: negative or non-finite sample count");

  const std::size_t K = bank.models.size();
  std::vector<double> group_total(K, 0.0);
  for (std::size_t i = 0; i < row.size(); ++i)
    if (row[i] != kPruned) group_total.at(static_cast<std::size_t>(row[i])) += counts[i];

  LevelBank out = bank;
  std::vector<bool> touched(K, false);
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] == kPruned) continue;
    const auto k = static_cast<std::size_t>(row[i]);
    if (!(group_total[k] > 0.0)) continue;
    auto& target = out.models[k];
    if (local[i].dim() != target.dim()) throw DimensionError(bank.level, target.dim(), local[i].dim());
    if (!touched[k]) {
      std::fill(target.values.begin(), target.values.end(), 0.0);
      touched[k] = true;
    }
    const double w = counts[i] / group_total[k];
    for (std::size_t j = 0; j < target.dim(); ++j) target[j] += w * local[i][j];
  }
  return out;
}

MappingRow assign_clusters(const LevelBank& bank, std::span<const ParamVector> local,
                           const MappingRow& current) {
  if (bank.kind != LevelKind::cluster) throw Error("assign_clusters: bank is not a cluster level");
  MappingRow out = current;
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (current[i] == kPruned) continue;
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (std::size_t k = 0; k < bank.models.size(); ++k) {
      const double d = squared_distance(local[i], bank.models[k]);
      if (d < best) {
        best = d;
        best_k = static_cast<int>(k);
      }
    }
    out[i] = best_k;
  }
  return out;
}

std::vector<std::size_t> reseed_empty_clusters(LevelBank& bank, const MappingRow& row,
                                               std::span<const ParamVector> local,
                                               EmptyClusterState& state) {
  const std::size_t K = bank.models.size();
  state.empty_rounds.resize(K, 0);
  std::vector<std::size_t> members(K, 0);
  for (int k : row)
    if (k != kPruned) ++members[static_cast<std::size_t>(k)];

  std::vector<bool> used(row.size(), false);
  std::vector<std::size_t> reseeded;
  for (std::size_t k = 0; k < K; ++k) {
    if (members[k] > 0) {
      state.empty_rounds[k] = 0;
      continue;
    }
    if (++state.empty_rounds[k] < 2) continue;
    double worst = -1.0;
    std::size_t pick = row.size();
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] == kPruned || used[i]) continue;
      const double d = squared_distance(local[i], bank.models[static_cast<std::size_t>(row[i])]);
      if (d > worst) {
        worst = d;
        pick = i;
      }
    }
    if (pick == row.size()) continue;
    used[pick] = true;
    bank.models[k] = local[pick];
    state.empty_rounds[k] = 0;
    reseeded.push_back(k);
  }
  return reseeded;
}

std::vector<ParamVector> farthest_first_centroids(std::span<const ParamVector> local, const MappingRow& row,
                                                  std::size_t K, std::size_t first) {
  if (local.size() != row.size()) throw Error("farthest_first_centroids: client count mismatch");
  if (first >= row.size() || row[first] == kPruned) throw Error("farthest_first_centroids: first client is not active");
  std::vector<ParamVector> out{local[first]};
  std::vector<double> nearest(row.size(), std::numeric_limits<double>::infinity());
  while (out.size() < K) {
    double best = -1.0;
    std::size_t pick = first;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] == kPruned) continue;
      nearest[i] = std::min(nearest[i], squared_distance(local[i], out.back()));
      if (nearest[i] > best) {
        best = nearest[i];
        pick = i;
      }
    }
    out.push_back(local[pick]);
  }
  return out;
}

std::size_t local_steps(std::size_t train_size, const LocalStepConfig& cfg) {
  if (cfg.batch_size == 0 || cfg.batch_size >= train_size) return cfg.epochs;
  return cfg.epochs * ((train_size + cfg.batch_size - 1) / cfg.batch_size);
}

namespace {

template <class Step>
ParamVector train_level(const Batch& train, const Matrix& frozen, ParamVector theta,
                        const PredictorSpec& spec, const LocalStepConfig& cfg, std::uint64_t seed,
                        StepTrace* trace, Step&& step) {
  const std::size_t n = train.size();
  if (n == 0) throw Error("local update: empty train set");
  const bool full = cfg.batch_size == 0 || cfg.batch_size >= n;
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  ParamVector prev_params;
  ParamVector prev_full;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    if (!full) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += full ? n : cfg.batch_size) {
      LossGrad lg;
      if (full) {
        lg = loss_and_grad_offset(train, frozen, theta, spec);
      } else {
        const std::size_t stop = std::min(n, start + cfg.batch_size);
        std::span<const std::size_t> rows(order.data() + start, stop - start);
        const Batch mb = gather(train, rows);
        const Matrix off = frozen.empty() ? Matrix() : gather_rows(frozen, rows);
        lg = loss_and_grad_offset(mb, off, theta, spec);
      }

      if (trace) {
        trace->minibatch_norms.push_back(std::sqrt(squared_norm(lg.grad)));
        if (trace->with_full_batch) {
          ParamVector g_full = full ? lg.grad : loss_and_grad_offset(train, frozen, theta, spec).grad;
          trace->deviation_sq.push_back(squared_distance(lg.grad, g_full));
          if (!prev_params.values.empty()) {
            const double dx = std::sqrt(squared_distance(theta, prev_params));
            if (dx > 0.0)
              trace->secant_ratios.push_back(std::sqrt(squared_distance(g_full, prev_full)) / dx);
          }
          if (trace->keep_raw) trace->raw_full.push_back(g_full);
          prev_params = theta;
          prev_full = std::move(g_full);
        }
        if (trace->keep_raw) {
          trace->raw_params.push_back(theta);
          trace->raw_minibatch.push_back(lg.grad);
        }
      }
      step(theta, lg.grad);
    }
  }
  return theta;
}

}  // namespace

ParamVector local_update_global(const Batch& train, const Matrix& frozen_logits, ParamVector theta,
                                const PredictorSpec& spec, const LocalStepConfig& cfg,
                                std::uint64_t seed, StepTrace* trace) {
  const double lr = cfg.lr;
  return train_level(train, frozen_logits, std::move(theta), spec, cfg, seed, trace,
                     [lr](ParamVector& p, const ParamVector& g) {
                       for (std::size_t j = 0; j < p.dim(); ++j) p[j] = p[j] - lr * g[j];
                     });
}

ParamVector local_update_cluster(const Batch& train, const Matrix& frozen_logits, ParamVector theta,
                                 const ParamVector& centroid, double lambda, double data_weight,
                                 const PredictorSpec& spec, const LocalStepConfig& cfg,
                                 std::uint64_t seed, StepTrace* trace) {
  if (centroid.dim() != theta.dim()) throw DimensionError(0, theta.dim(), centroid.dim());
  const double pull = cfg.lr * lambda;
  if (pull >= 1.0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::clog << "warning: lr * lambda = " << pull << " >= 1, proximal step overshoots the centroid\n";
  }
  const double keep = 1.0 - pull;
  const double data_step = cfg.lr * data_weight;
  return train_level(train, frozen_logits, std::move(theta), spec, cfg, seed, trace,
                     [&](ParamVector& p, const ParamVector& g) {
                       for (std::size_t j = 0; j < p.dim(); ++j)
                         p[j] = (keep * p[j] + pull * centroid[j]) - data_step * g[j];
                     });
}

ParamVector local_update_personalized(const Batch& train, const Matrix& frozen_logits,
                                      ParamVector theta, const PredictorSpec& spec,
                                      const LocalStepConfig& cfg, std::uint64_t seed,
                                      StepTrace* trace) {
  return local_update_global(train, frozen_logits, std::move(theta), spec, cfg, seed, trace);
}

double em_objective_F(std::span<const LevelBank> banks, const MappingTable& mapping,
                      const std::vector<std::vector<ParamVector>>& local,
                      std::span<const double> counts) {
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(n > 0.0)) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double client = 0.0;
    for (std::size_t l = 0; l < banks.size(); ++l) {
      if (banks[l].kind != LevelKind::cluster) continue;
      const int k = mapping.rows.at(l).at(i);
      if (k == kPruned) continue;
      client += squared_distance(local.at(l).at(i), banks[l].models.at(static_cast<std::size_t>(k)));
    }
    total += counts[i] / n * client;
  }
  return total;
}

double fl_objective_R(std::span<const Batch> train_sets, std::span<const LevelBank> banks,
                      const MappingTable& mapping, const PredictorSpec& spec) {
  double n = 0.0;
  for (const auto& b : train_sets) n += static_cast<double>(b.size());
  if (!(n > 0.0)) throw Error("fl_objective_R: no training samples");
  double total = 0.0;
  for (std::size_t i = 0; i < train_sets.size(); ++i) {
    std::vector<ParamVector> models;
    for (std::size_t l = 0; l < banks.size(); ++l) {
      const int k = mapping.rows.at(l).at(i);
      if (k != kPruned) models.push_back(banks[l].models.at(static_cast<std::size_t>(k)));
    }
    const Matrix logits = predict_additive(train_sets[i].features, models, spec);
    total += static_cast<double>(train_sets[i].size()) / n * cross_entropy(logits, train_sets[i].labels);
  }
  return total;
}

double lr_bound_theorem1(std::span<const double> distances_sq, double Q, double U, double L) {
  const double sum = std::accumulate(distances_sq.begin(), distances_sq.end(), 0.0);
  if (!(U > 0.0) || !(Q > 0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(sum / L) / (Q * U);
}

double lr_bound_theorem2(double grad_norm_sq, double B, double U, double sigma2, double beta,
                         double theorem1_bound) {
  const double smooth = (grad_norm_sq - B * U * U) / (grad_norm_sq + sigma2) * (2.0 / beta);
  return std::min(theorem1_bound, smooth);
}

}  // namespace femam
