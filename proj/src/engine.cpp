#include "femam/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "femam/diagnostics.hpp"
#include "femam/error.hpp"
#include "femam/rng.hpp"

namespace femam {

void EngineConfig::validate() const {
  if (schedule.empty()) throw ConfigError("femam.schedule must list at least one level");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("femam.lr must be nonnegative");
  if (!(lambda >= 0.0)) throw ConfigError("femam.lambda must be nonnegative");
  if (!(variance_threshold >= 0.0)) throw ConfigError("femam.variance_threshold must be nonnegative");
  if (std::isnan(prune_epsilon)) throw ConfigError("femam.prune_epsilon must be a number");
  if (window == 0) throw ConfigError("femam.window must be positive");
  if (level1_rounds == 0) throw ConfigError("femam.level1_rounds must be positive");
  if (max_rounds_per_level == 0) throw ConfigError("femam.max_rounds_per_level must be positive");
  if (!(init_scale >= 0.0)) throw ConfigError("femam.init_scale must be nonnegative");
  for (auto k : schedule)
    if (k == LevelKind::cluster && clusters_per_level == 0)
      throw ConfigError("femam.clusters_per_level must be positive");
}

bool check_level_converged(std::span<const double> accuracy_history, std::size_t window,
                           double threshold) {
  if (threshold < 0.0) throw ConfigError("convergence threshold must be nonnegative");
  if (window == 0 || accuracy_history.size() < window) return false;
  return population_variance(accuracy_history.last(window)) < threshold;
}

bool should_prune(double loss_before, double loss_after, double epsilon) {
  return loss_before - loss_after <= epsilon;
}

namespace {

Matrix add_logits(const Matrix& prefix, const Matrix& level) {
  Matrix out = prefix;
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += level.data[k];
  return out;
}

}  // namespace

bool prune_level(const Batch& validation, std::span<const ParamVector> prefix,
                 const ParamVector& level_model, const PredictorSpec& spec, double epsilon) {
  if (validation.size() == 0) throw Error("prune_level: empty validation set");
  const Matrix before = predict_additive(validation.features, prefix, spec);
  const Matrix after = add_logits(before, forward(validation.features, level_model, spec));
  return should_prune(cross_entropy(before, validation.labels),
                      cross_entropy(after, validation.labels), epsilon);
}

EvalResult evaluate_clients(std::span<const ClientShard> shards,
                            const std::vector<std::vector<ParamVector>>& client_models,
                            const PredictorSpec& spec, std::vector<double>* val_loss) {
  if (client_models.size() != shards.size()) throw Error("evaluate_clients: client count mismatch");
  std::vector<std::vector<int>> preds(shards.size()), labels(shards.size());
  if (val_loss) val_loss->assign(shards.size(), 0.0);
  for (std::size_t i = 0; i < shards.size(); ++i) {
    preds[i] = argmax_rows(predict_additive(shards[i].test.features, client_models[i], spec));
    labels[i] = shards[i].test.labels;
    if (val_loss)
      (*val_loss)[i] = cross_entropy(predict_additive(shards[i].validation.features, client_models[i], spec),
                                     shards[i].validation.labels);
  }
  return summarize(preds, labels, spec.num_classes);
}

std::vector<std::vector<std::size_t>> structure_boundaries(const StructureMap& structure) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& row : structure.cells) {
    std::vector<std::size_t> b;
    for (std::size_t i = 1; i < row.size(); ++i)
      if (row[i] != row[i - 1]) b.push_back(i);
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

struct ClientState {
  std::vector<ParamVector> retained;
  Matrix prefix_train;
  Matrix prefix_val;
  Matrix prefix_test;
};

struct ClientRoundOutput {
  ParamVector local;
  ClientRoundTrace trace;
};

struct RoundEval {
  std::vector<std::vector<int>> predictions;
  std::vector<double> val_loss;
  std::vector<double> train_loss;
};

LevelBank init_bank(std::size_t level, LevelKind kind, std::size_t num_clients,
                    const PredictorSpec& spec, const EngineConfig& cfg) {
  LevelBank bank;
  bank.level = level;
  bank.kind = kind;
  bank.lambda = kind == LevelKind::cluster ? cfg.lambda : 0.0;
  switch (kind) {
    case LevelKind::global:
      bank.models.push_back(init_params(spec, derive_seed(cfg.seed, Stream::init, {level, 0})));
      break;
    case LevelKind::cluster:
      for (std::size_t k = 0; k < cfg.clusters_per_level; ++k)
        bank.models.push_back(
            init_near_zero(spec, derive_seed(cfg.seed, Stream::init, {level, k}), cfg.init_scale));
      break;
    case LevelKind::personalized:
      for (std::size_t i = 0; i < num_clients; ++i)
        bank.models.push_back(
            init_near_zero(spec, derive_seed(cfg.seed, Stream::init, {level, i}), cfg.init_scale));
      break;
  }
  return bank;
}

MappingRow init_mapping(std::size_t level, LevelKind kind, std::size_t num_clients, std::size_t K,
                        std::uint64_t seed, bool seeded) {
  if (kind == LevelKind::cluster && seeded) return constant_mapping(num_clients, 0);
  switch (kind) {
    case LevelKind::global:
      return constant_mapping(num_clients, 0);
    case LevelKind::personalized:
      return identity_mapping(num_clients);
    case LevelKind::cluster: {
      MappingRow row(num_clients);
      for (std::size_t i = 0; i < num_clients; ++i) {
        Rng rng = make_rng(seed, Stream::mapping, {level, i});
        row[i] = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, K - 1)(rng));
      }
      return row;
    }
  }
  return {};
}

RoundEval evaluate_round(std::span<const ClientShard> shards, const std::vector<ClientState>& clients,
                         const LevelBank& bank, const MappingRow& row, const PredictorSpec& spec,
                         Exec exec) {
  const std::size_t m = shards.size();
  RoundEval out;
  out.predictions.resize(m);
  out.val_loss.resize(m);
  out.train_loss.resize(m);
  for_each_client(exec, m, [&](std::size_t i) {
    const auto& s = shards[i];
    const auto& c = clients[i];
    if (row[i] == kPruned) {
      out.predictions[i] = argmax_rows(c.prefix_test);
      out.val_loss[i] = cross_entropy(c.prefix_val, s.validation.labels);
      out.train_loss[i] = cross_entropy(c.prefix_train, s.train.labels);
      return;
    }
    const ParamVector& model = bank.models[static_cast<std::size_t>(row[i])];
    out.predictions[i] = argmax_rows(add_logits(c.prefix_test, forward(s.test.features, model, spec)));
    out.val_loss[i] =
        cross_entropy(add_logits(c.prefix_val, forward(s.validation.features, model, spec)),
                      s.validation.labels);
    out.train_loss[i] = cross_entropy(add_logits(c.prefix_train, forward(s.train.features, model, spec)),
                                      s.train.labels);
  });
  return out;
}

}  // namespace

RunRecord run_femam(std::span<const ClientShard> shards, const PredictorSpec& spec,
                    const EngineConfig& cfg, const RoundObserver& observer) {
  cfg.validate();
  spec.validate();
  if (shards.empty()) throw ConfigError("run_femam: no client shards");
  const std::size_t m = shards.size();
  const std::size_t L = cfg.num_levels();

  std::vector<double> counts(m);
  double n_total = 0.0;
  std::vector<double> grad_bound(m, -1.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (shards[i].train.size() == 0) throw ConfigError("client " + std::to_string(i) + " has no training data");
    if (shards[i].validation.size() == 0)
      throw ConfigError("client " + std::to_string(i) + " has no validation data");
    counts[i] = static_cast<double>(shards[i].train.size());
    n_total += counts[i];
    grad_bound[i] = gradient_norm_bound(spec, shards[i].train.features);
  }

  std::vector<ClientState> clients(m);
  for (std::size_t i = 0; i < m; ++i) {
    clients[i].prefix_train = Matrix(shards[i].train.size(), spec.num_classes);
    clients[i].prefix_val = Matrix(shards[i].validation.size(), spec.num_classes);
    clients[i].prefix_test = Matrix(shards[i].test.size(), spec.num_classes);
  }

  RunRecord rec;
  rec.algorithm = "femam";
  rec.seed = cfg.seed;
  rec.structure.cells.assign(L, MappingRow(m, kPruned));
  rec.mapping.rows.assign(L, MappingRow(m, kPruned));

  auto violation = [&](std::string msg) { rec.invariant_violations.push_back(std::move(msg)); };

  std::size_t global_round = 0;
  double observed_U = 0.0;

  for (std::size_t lv = 0; lv < L; ++lv) {
    const LevelKind kind = cfg.schedule[lv];
    LevelBank bank = init_bank(lv, kind, m, spec, cfg);
    MappingRow row = init_mapping(lv, kind, m, bank.models.size(), cfg.seed, cfg.seed_centroids);
    EmptyClusterState empty_state;
    const std::vector<LevelBank> frozen_snapshot = rec.banks;
    rec.level_add_rounds.push_back(global_round);

    std::vector<ParamVector> last_local(m);
    std::vector<double> prev_distance(m, 0.0);
    std::vector<double> level_accuracy;
    const std::size_t cap = lv == 0 ? cfg.level1_rounds + cfg.max_rounds_per_level
                                    : cfg.max_rounds_per_level;

    for (std::size_t r = 0;; ++r, ++global_round) {
      // Broadcast, then local training on the latest level only.
      const auto received = broadcast(bank, row);
      std::vector<ClientRoundOutput> outputs(m);
      for_each_client(cfg.exec, m, [&](std::size_t i) {
        auto& out = outputs[i];
        const auto& train = shards[i].train;
        const ParamVector start = *received[i];
        LocalStepConfig step{cfg.lr, cfg.local_epochs, cfg.batch_size};
        const std::size_t Q = local_steps(train.size(), step);

        out.trace.level = lv;
        out.trace.round = global_round;
        out.trace.client = i;
        out.trace.group = row[i];
        out.trace.weight = counts[i];
        out.trace.lr_bound = std::numeric_limits<double>::infinity();
        if (kind == LevelKind::cluster && r > 0) {
          const double U = grad_bound[i] > 0.0 ? grad_bound[i] : observed_U;
          const double d[] = {prev_distance[i]};
          out.trace.lr_bound = lr_bound_theorem1(d, static_cast<double>(Q), U, static_cast<double>(L));
          if (cfg.clamp_lr_theorem1) step.lr = std::min(step.lr, out.trace.lr_bound);
        }
        out.trace.lr_applied = step.lr;

        if (cfg.trace_gradients) {
          out.trace.start_grad = loss_and_grad_offset(train, clients[i].prefix_train, start, spec).grad;
          out.trace.start_grad_norm_sq = squared_norm(out.trace.start_grad);
        }
        StepTrace steps;
        steps.with_full_batch = cfg.trace_gradients;
        steps.keep_raw = cfg.keep_raw_trace;
        const std::uint64_t seed = derive_seed(cfg.seed, Stream::shuffle, {lv, r, i});
        switch (kind) {
          case LevelKind::global:
            out.local = local_update_global(train, clients[i].prefix_train, start, spec, step, seed, &steps);
            break;
          case LevelKind::cluster: {
            const double w = cfg.weight_by_share ? counts[i] / n_total : 1.0;
            out.local = local_update_cluster(train, clients[i].prefix_train, start, start, cfg.lambda, w,
                                             spec, step, seed, &steps);
            break;
          }
          case LevelKind::personalized:
            out.local =
                local_update_personalized(train, clients[i].prefix_train, start, spec, step, seed, &steps);
            break;
        }
        for (double v : steps.minibatch_norms)
          out.trace.max_minibatch_norm = std::max(out.trace.max_minibatch_norm, v);
        for (double v : steps.deviation_sq) out.trace.max_deviation_sq = std::max(out.trace.max_deviation_sq, v);
        for (double v : steps.secant_ratios) out.trace.max_secant = std::max(out.trace.max_secant, v);
        if (cfg.keep_raw_trace) out.trace.steps = std::move(steps);
      });

      // Upload, reassign, aggregate.
      RoundMetrics metrics;
      metrics.round = global_round;
      metrics.level = lv;
      metrics.kind = kind;
      metrics.active_clients = m;
      metrics.lr_bound_min = std::numeric_limits<double>::infinity();
      std::size_t transfers = 0;
      std::vector<ParamVector> local(m);
      for (std::size_t i = 0; i < m; ++i) {
        local[i] = std::move(outputs[i].local);
        if (!all_finite(local[i]))
          throw InvariantError("non-finite parameters from client " + std::to_string(i) + " at level " +
                               std::to_string(lv + 1));
        transfers += 2;  // one model down at broadcast, one up at upload
      }
      if (kind == LevelKind::cluster && r == 0 && cfg.seed_centroids) {
        Rng rng = make_rng(cfg.seed, Stream::reseed, {lv});
        const std::size_t first = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
        bank.models = farthest_first_centroids(local, row, bank.models.size(), first);
      }
      if (kind == LevelKind::cluster) row = assign_clusters(bank, local, row);
      bank = aggregate(bank, row, local, counts);
      if (kind == LevelKind::cluster) reseed_empty_clusters(bank, row, local, empty_state);
      for (const auto& model : bank.models)
        if (!all_finite(model)) throw InvariantError("non-finite aggregated model at level " + std::to_string(lv + 1));

      // Objectives and diagnostics.
      std::vector<ParamVector> start_grads;
      double F = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        auto& t = outputs[i].trace;
        if (kind == LevelKind::cluster) {
          t.distance_sq = squared_distance(local[i], bank.models[static_cast<std::size_t>(row[i])]);
          F += counts[i] / n_total * t.distance_sq;
          prev_distance[i] = t.distance_sq;
        }
        metrics.grad_norm_max = std::max(metrics.grad_norm_max, t.max_minibatch_norm);
        observed_U = std::max(observed_U, t.max_minibatch_norm);
        metrics.lr_bound_min = std::min(metrics.lr_bound_min, t.lr_bound);
        if (t.lr_applied > t.lr_bound) metrics.lr_violation = true;
        if (cfg.trace_gradients) start_grads.push_back(t.start_grad);
      }
      if (cfg.trace_gradients) {
        std::vector<ClientRoundTrace> round_trace;
        for (auto& o : outputs) round_trace.push_back(o.trace);
        fill_dissimilarity(round_trace, start_grads);
        for (std::size_t i = 0; i < m; ++i) outputs[i].trace.b_ratio = round_trace[i].b_ratio;
      }
      metrics.F = F;
      metrics.transfers = transfers;
      if (transfers != 2 * metrics.active_clients)
        violation("transfer count " + std::to_string(transfers) + " at round " + std::to_string(global_round));

      const RoundEval ev = evaluate_round(shards, clients, bank, row, spec, cfg.exec);
      std::vector<std::vector<int>> labels(m);
      double val_total = 0.0, val_weight = 0.0, R = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        labels[i] = shards[i].test.labels;
        val_total += ev.val_loss[i] * static_cast<double>(shards[i].validation.size());
        val_weight += static_cast<double>(shards[i].validation.size());
        R += counts[i] / n_total * ev.train_loss[i];
      }
      const EvalResult er = summarize(ev.predictions, labels, spec.num_classes);
      metrics.accuracy = er.overall_accuracy;
      metrics.macro_f1 = er.mean_macro_f1;
      metrics.val_loss = val_total / val_weight;
      metrics.R = R;

      for (std::size_t l = 0; l < frozen_snapshot.size(); ++l)
        if (!(rec.banks[l].models == frozen_snapshot[l].models))
          violation("frozen level " + std::to_string(l + 1) + " changed during level " + std::to_string(lv + 1));

      for (auto& o : outputs) {
        if (!cfg.keep_raw_trace) o.trace.start_grad = ParamVector();
        rec.trace.push_back(std::move(o.trace));
      }
      rec.rounds.push_back(metrics);
      rec.mapping_log.push_back({lv, global_round, false, row});
      last_local = std::move(local);
      level_accuracy.push_back(metrics.accuracy);

      if (observer) {
        std::vector<LevelBank> current = rec.banks;
        current.push_back(bank);
        observer(metrics, current);
      }

      const bool budget_done = lv > 0 || r + 1 >= cfg.level1_rounds;
      if (budget_done && check_level_converged(level_accuracy, cfg.window, cfg.variance_threshold)) {
        ++global_round;
        break;
      }
      if (r + 1 >= cap) {
        ++global_round;
        break;
      }
    }

    // Prune clients whose validation loss does not drop by more than epsilon,
    // then re-aggregate over the remaining clients. Repeated until no further
    // client prunes, so every kept client's decision holds for the final model.
    if (lv > 0) {
      bool changed = true;
      while (changed) {
        changed = false;
        for (std::size_t i = 0; i < m; ++i) {
          if (row[i] == kPruned) continue;
          const auto& val = shards[i].validation;
          const Matrix after = add_logits(
              clients[i].prefix_val,
              forward(val.features, bank.models[static_cast<std::size_t>(row[i])], spec));
          const double before_loss = cross_entropy(clients[i].prefix_val, val.labels);
          const double after_loss = cross_entropy(after, val.labels);
          if (should_prune(before_loss, after_loss, cfg.prune_epsilon)) {
            row[i] = kPruned;
            changed = true;
          }
        }
        if (changed && kind != LevelKind::personalized) bank = aggregate(bank, row, last_local, counts);
      }
      rec.mapping_log.push_back({lv, global_round == 0 ? 0 : global_round - 1, true, row});
    }

    // Freeze the level into each retained client's prefix.
    for (std::size_t i = 0; i < m; ++i) {
      if (row[i] == kPruned) continue;
      const ParamVector& model = bank.models[static_cast<std::size_t>(row[i])];
      auto& c = clients[i];
      c.retained.push_back(model);
      c.prefix_train = add_logits(c.prefix_train, forward(shards[i].train.features, model, spec));
      c.prefix_val = add_logits(c.prefix_val, forward(shards[i].validation.features, model, spec));
      c.prefix_test = add_logits(c.prefix_test, forward(shards[i].test.features, model, spec));
    }
    rec.structure.cells[lv] = row;
    rec.mapping.rows[lv] = row;
    rec.banks.push_back(std::move(bank));

    if (lv == 0) {
      rec.level1_val_loss.resize(m);
      for (std::size_t i = 0; i < m; ++i)
        rec.level1_val_loss[i] = cross_entropy(clients[i].prefix_val, shards[i].validation.labels);
    }
  }

  // Final evaluation of each client's retained ensemble.
  rec.client_models.resize(m);
  for (std::size_t i = 0; i < m; ++i) rec.client_models[i] = clients[i].retained;
  rec.final_eval = evaluate_clients(shards, rec.client_models, spec, &rec.final_val_loss);
  for (std::size_t i = 0; i < m; ++i)
    if (rec.final_val_loss[i] >
        rec.level1_val_loss[i] + std::max(0.0, -cfg.prune_epsilon) * static_cast<double>(L - 1) + 1e-12)
      violation("client " + std::to_string(i) + " final validation loss exceeds level-1 loss");
  return rec;
}

}  // namespace femam
