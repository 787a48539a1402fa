#include "femam/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "femam/error.hpp"
#include "femam/rng.hpp"

namespace femam {

void BaselineConfig::validate() const {
  if (!is_baseline(algorithm)) throw ConfigError("unknown algorithm '" + algorithm + "'");
  if (rounds == 0) throw ConfigError(algorithm + ".rounds must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError(algorithm + ".lr must be nonnegative");
  if (!(lambda >= 0.0)) throw ConfigError(algorithm + ".lambda must be nonnegative");
  if (clusters == 0) throw ConfigError(algorithm + ".clusters must be positive");
}

bool is_baseline(const std::string& algorithm) {
  return algorithm == "local" || algorithm == "fedavg" || algorithm == "fedavg+" ||
         algorithm == "fesem" || algorithm == "fesem+";
}

namespace {

struct Totals {
  std::vector<double> counts;
  double n = 0.0;
};

Totals totals(std::span<const ClientShard> shards) {
  Totals t;
  for (const auto& s : shards) {
    if (s.train.size() == 0) throw ConfigError("client " + std::to_string(s.client_id) + " has no training data");
    t.counts.push_back(static_cast<double>(s.train.size()));
    t.n += t.counts.back();
  }
  return t;
}

// Per-round metrics when client i uses model models[row[i]].
RoundMetrics evaluate_single(std::span<const ClientShard> shards, std::span<const ParamVector> models,
                             const MappingRow& row, const PredictorSpec& spec, const Totals& t,
                             Exec exec) {
  const std::size_t m = shards.size();
  std::vector<std::vector<int>> preds(m), labels(m);
  std::vector<double> val(m), train(m);
  for_each_client(exec, m, [&](std::size_t i) {
    const ParamVector& model = models[static_cast<std::size_t>(row[i])];
    preds[i] = argmax_rows(forward(shards[i].test.features, model, spec));
    labels[i] = shards[i].test.labels;
    val[i] = cross_entropy(forward(shards[i].validation.features, model, spec), shards[i].validation.labels);
    train[i] = cross_entropy(forward(shards[i].train.features, model, spec), shards[i].train.labels);
  });
  RoundMetrics out;
  const EvalResult er = summarize(preds, labels, spec.num_classes);
  out.accuracy = er.overall_accuracy;
  out.macro_f1 = er.mean_macro_f1;
  double vw = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    out.val_loss += val[i] * static_cast<double>(shards[i].validation.size());
    vw += static_cast<double>(shards[i].validation.size());
    out.R += t.counts[i] / t.n * train[i];
  }
  out.val_loss /= vw;
  out.active_clients = m;
  out.lr_bound_min = std::numeric_limits<double>::infinity();
  return out;
}

RunRecord finish(RunRecord rec, std::span<const ClientShard> shards, const PredictorSpec& spec,
                 std::vector<std::vector<ParamVector>> client_models, LevelBank bank, MappingRow row) {
  rec.client_models = std::move(client_models);
  rec.final_eval = evaluate_clients(shards, rec.client_models, spec, &rec.final_val_loss);
  rec.structure.cells = {row};
  rec.mapping.rows = {row};
  rec.banks = {std::move(bank)};
  rec.level_add_rounds = {0};
  return rec;
}

void check_finite(const ParamVector& p, const char* what) {
  if (!all_finite(p)) throw InvariantError(std::string("non-finite parameters in ") + what);
}

}  // namespace

RunRecord run_local(std::span<const ClientShard> shards, const PredictorSpec& spec,
                    const BaselineConfig& cfg, const RoundObserver& observer) {
  cfg.validate();
  const std::size_t m = shards.size();
  const Totals t = totals(shards);
  LevelBank bank;
  bank.kind = LevelKind::personalized;
  bank.models.assign(m, init_params(spec, derive_seed(cfg.seed, Stream::init, {0, 0})));
  const MappingRow row = identity_mapping(m);
  const LocalStepConfig step{cfg.lr, cfg.local_epochs, cfg.batch_size};
  const Matrix none;

  RunRecord rec;
  rec.algorithm = "local";
  rec.seed = cfg.seed;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    for_each_client(cfg.exec, m, [&](std::size_t i) {
      bank.models[i] = local_update_global(shards[i].train, none, bank.models[i], spec, step,
                                           derive_seed(cfg.seed, Stream::shuffle, {0, r, i}));
    });
    for (const auto& p : bank.models) check_finite(p, "local");
    RoundMetrics metrics = evaluate_single(shards, bank.models, row, spec, t, cfg.exec);
    metrics.round = r;
    metrics.kind = LevelKind::personalized;
    metrics.active_clients = 0;  // nobody communicates
    rec.rounds.push_back(metrics);
    if (observer) observer(metrics, std::span<const LevelBank>(&bank, 1));
  }
  std::vector<std::vector<ParamVector>> models(m);
  for (std::size_t i = 0; i < m; ++i) models[i] = {bank.models[i]};
  return finish(std::move(rec), shards, spec, std::move(models), std::move(bank), row);
}

RunRecord run_fedavg(std::span<const ClientShard> shards, const PredictorSpec& spec,
                     const BaselineConfig& cfg, const RoundObserver& observer) {
  cfg.validate();
  const std::size_t m = shards.size();
  const Totals t = totals(shards);
  LevelBank bank;
  bank.kind = LevelKind::global;
  bank.models.push_back(init_params(spec, derive_seed(cfg.seed, Stream::init, {0, 0})));
  const MappingRow row = constant_mapping(m, 0);
  const LocalStepConfig step{cfg.lr, cfg.local_epochs, cfg.batch_size};
  const Matrix none;

  RunRecord rec;
  rec.algorithm = "fedavg";
  rec.seed = cfg.seed;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto received = broadcast(bank, row);
    std::vector<ParamVector> local(m);
    for_each_client(cfg.exec, m, [&](std::size_t i) {
      local[i] = local_update_global(shards[i].train, none, *received[i], spec, step,
                                     derive_seed(cfg.seed, Stream::shuffle, {0, r, i}));
    });
    for (const auto& p : local) check_finite(p, "fedavg");
    bank = aggregate(bank, row, local, t.counts);
    RoundMetrics metrics = evaluate_single(shards, bank.models, row, spec, t, cfg.exec);
    metrics.round = r;
    metrics.kind = LevelKind::global;
    metrics.transfers = 2 * m;
    rec.rounds.push_back(metrics);
    if (observer) observer(metrics, std::span<const LevelBank>(&bank, 1));
  }
  std::vector<std::vector<ParamVector>> models(m, std::vector<ParamVector>{bank.models[0]});
  return finish(std::move(rec), shards, spec, std::move(models), std::move(bank), row);
}

RunRecord run_fesem(std::span<const ClientShard> shards, const PredictorSpec& spec,
                    const BaselineConfig& cfg, const RoundObserver& observer) {
  cfg.validate();
  const std::size_t m = shards.size();
  const Totals t = totals(shards);
  LevelBank bank;
  bank.kind = LevelKind::cluster;
  bank.lambda = cfg.lambda;
  for (std::size_t k = 0; k < cfg.clusters; ++k)
    bank.models.push_back(init_params(spec, derive_seed(cfg.seed, Stream::init, {0, k})));
  MappingRow row(m, 0);
  if (!cfg.seed_centroids) {
    for (std::size_t i = 0; i < m; ++i) {
      Rng rng = make_rng(cfg.seed, Stream::mapping, {0, i});
      row[i] = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, cfg.clusters - 1)(rng));
    }
  }
  EmptyClusterState empty_state;
  const LocalStepConfig step{cfg.lr, cfg.local_epochs, cfg.batch_size};
  const Matrix none;

  RunRecord rec;
  rec.algorithm = "fesem";
  rec.seed = cfg.seed;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto received = broadcast(bank, row);
    std::vector<ParamVector> local(m);
    for_each_client(cfg.exec, m, [&](std::size_t i) {
      const double w = cfg.weight_by_share ? t.counts[i] / t.n : 1.0;
      local[i] = local_update_cluster(shards[i].train, none, *received[i], *received[i], cfg.lambda, w,
                                      spec, step, derive_seed(cfg.seed, Stream::shuffle, {0, r, i}));
    });
    for (const auto& p : local) check_finite(p, "fesem");
    if (r == 0 && cfg.seed_centroids) {
      Rng rng = make_rng(cfg.seed, Stream::reseed, {0});
      const std::size_t first = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
      bank.models = farthest_first_centroids(local, row, cfg.clusters, first);
    }
    row = assign_clusters(bank, local, row);
    bank = aggregate(bank, row, local, t.counts);
    reseed_empty_clusters(bank, row, local, empty_state);

    RoundMetrics metrics = evaluate_single(shards, bank.models, row, spec, t, cfg.exec);
    metrics.round = r;
    metrics.kind = LevelKind::cluster;
    metrics.transfers = 2 * m;
    for (std::size_t i = 0; i < m; ++i)
      metrics.F += t.counts[i] / t.n * squared_distance(local[i], bank.models[static_cast<std::size_t>(row[i])]);
    rec.rounds.push_back(metrics);
    rec.mapping_log.push_back({0, r, false, row});
    if (observer) observer(metrics, std::span<const LevelBank>(&bank, 1));
  }
  std::vector<std::vector<ParamVector>> models(m);
  for (std::size_t i = 0; i < m; ++i) models[i] = {bank.models[static_cast<std::size_t>(row[i])]};
  return finish(std::move(rec), shards, spec, std::move(models), std::move(bank), row);
}

RunRecord finetune_plus(const RunRecord& base, std::span<const ClientShard> shards,
                        const PredictorSpec& spec, const BaselineConfig& cfg, std::size_t epochs) {
  if (base.client_models.size() != shards.size()) throw Error("finetune_plus: base run does not match shards");
  RunRecord rec = base;
  rec.algorithm = base.algorithm + "+";
  const LocalStepConfig step{cfg.lr, epochs, cfg.batch_size};
  for_each_client(cfg.exec, shards.size(), [&](std::size_t i) {
    auto& models = rec.client_models[i];
    if (models.empty()) return;
    const std::vector<ParamVector> frozen(models.begin(), models.end() - 1);
    const Matrix offset = frozen.empty() ? Matrix() : predict_additive(shards[i].train.features, frozen, spec);
    models.back() = local_update_global(shards[i].train, offset, models.back(), spec, step,
                                        derive_seed(cfg.seed, Stream::finetune, {i}));
  });
  for (const auto& models : rec.client_models)
    for (const auto& p : models) check_finite(p, "fine-tuning");
  rec.final_eval = evaluate_clients(shards, rec.client_models, spec, &rec.final_val_loss);
  return rec;
}

RunRecord run_baseline(std::span<const ClientShard> shards, const PredictorSpec& spec,
                       const BaselineConfig& cfg, const RoundObserver& observer) {
  cfg.validate();
  if (cfg.algorithm == "local") return run_local(shards, spec, cfg, observer);
  if (cfg.algorithm == "fedavg") return run_fedavg(shards, spec, cfg, observer);
  if (cfg.algorithm == "fesem") return run_fesem(shards, spec, cfg, observer);
  if (cfg.algorithm == "fedavg+")
    return finetune_plus(run_fedavg(shards, spec, cfg, observer), shards, spec, cfg, cfg.finetune_epochs);
  return finetune_plus(run_fesem(shards, spec, cfg, observer), shards, spec, cfg, cfg.finetune_epochs);
}

}  // namespace femam
