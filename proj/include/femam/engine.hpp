#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "femam/datagen.hpp"
#include "femam/parallel.hpp"
#include "femam/record.hpp"

namespace femam {

struct EngineConfig {
  std::vector<LevelKind> schedule{LevelKind::global, LevelKind::cluster, LevelKind::cluster,
                                  LevelKind::cluster, LevelKind::personalized};
  std::size_t clusters_per_level = 5;
  double lr = 0.01;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 64;
  double lambda = 0.1;
  bool weight_by_share = true;  // n_i/n factor on the cluster-level data gradient
  std::size_t level1_rounds = 400;
  std::size_t max_rounds_per_level = 500;
  std::size_t window = 50;
  double variance_threshold = 1.0;  // percentage points squared
  double prune_epsilon = 0.0;
  double init_scale = 1e-3;  // cluster/personalized levels start near zero
  bool seed_centroids = true;  // farthest-first seeding from the first round's local updates
  bool clamp_lr_theorem1 = false;
  bool trace_gradients = true;  // full-batch reference gradients for the diagnostics
  bool keep_raw_trace = false;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;

  std::size_t num_levels() const { return schedule.size(); }
  void validate() const;
};

/// Called after every round with the round's metrics and the current banks.
using RoundObserver = std::function<void(const RoundMetrics&, std::span<const LevelBank>)>;

/// True iff at least `window` accuracies are recorded and the population
/// variance of the last `window` of them is below `threshold`.
bool check_level_converged(std::span<const double> accuracy_history, std::size_t window,
                           double threshold);

/// Prune iff loss_before - loss_after <= epsilon.
bool should_prune(double loss_before, double loss_after, double epsilon);

/// Prune decision for one client: validation loss of the retained prefix
/// versus prefix plus the new level's model.
bool prune_level(const Batch& validation, std::span<const ParamVector> prefix,
                 const ParamVector& level_model, const PredictorSpec& spec, double epsilon);

/// Progressive multi-level training with pruning; see README for the loop.
RunRecord run_femam(std::span<const ClientShard> shards, const PredictorSpec& spec,
                    const EngineConfig& config, const RoundObserver& observer = {});

/// Test metrics of each client's additive model list; optionally the
/// per-client validation loss.
EvalResult evaluate_clients(std::span<const ClientShard> shards,
                            const std::vector<std::vector<ParamVector>>& client_models,
                            const PredictorSpec& spec, std::vector<double>* val_loss = nullptr);

/// Per-level cluster boundary positions: index b is listed when clients b-1
/// and b sit in different models (pruned cells count as their own group).
std::vector<std::vector<std::size_t>> structure_boundaries(const StructureMap& structure);

}  // namespace femam
