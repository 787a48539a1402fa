#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "femam/model.hpp"

namespace femam {

enum class LevelKind { global, cluster, personalized };

LevelKind parse_level_kind(const std::string& name);
std::string to_string(LevelKind kind);

/// Shared models of one level: 1 for global, K_l for cluster, m for personalized.
struct LevelBank {
  std::size_t level = 0;
  LevelKind kind = LevelKind::global;
  std::vector<ParamVector> models;
  double lambda = 0.0;  // proximal weight, cluster kind only
};

/// Marks a (client, level) pair removed by pruning.
inline constexpr int kPruned = -1;

/// One level's client -> model index map (or kPruned).
using MappingRow = std::vector<int>;

/// C_l(i) for every level.
struct MappingTable {
  std::vector<MappingRow> rows;
};

MappingRow identity_mapping(std::size_t num_clients);
MappingRow constant_mapping(std::size_t num_clients, int model);

/// Client i receives an exact copy of bank.models[row[i]]; pruned clients receive nothing.
std::vector<std::optional<ParamVector>> broadcast(const LevelBank& bank, const MappingRow& row);

/// Per-group n-weighted mean of the local vectors, reduced in ascending client
/// order. Groups without an active client keep their current model.
/// Throws on negative counts.
LevelBank aggregate(const LevelBank& bank, const MappingRow& row,
                    std::span<const ParamVector> local, std::span<const double> counts);

/// Nearest-centroid assignment; ties go to the smallest index; pruned entries untouched.
MappingRow assign_clusters(const LevelBank& bank, std::span<const ParamVector> local,
                           const MappingRow& current);

/// Per-model count of consecutive rounds a cluster model had no members.
struct EmptyClusterState {
  std::vector<int> empty_rounds;
};

/// A cluster model left empty for a second consecutive round is re-seeded
/// from the active client farthest from its own centroid. Returns the indices
/// of re-seeded models.
std::vector<std::size_t> reseed_empty_clusters(LevelBank& bank, const MappingRow& row,
                                               std::span<const ParamVector> local,
                                               EmptyClusterState& state);

/// Farthest-first centroid seeding over active clients' vectors: the first
/// centroid is `local[first]`, each next one the active vector farthest from
/// every centroid chosen so far (ties to the lowest client id). Returns K
/// vectors; when fewer than K distinct vectors exist, the rest repeat the last pick.
std::vector<ParamVector> farthest_first_centroids(std::span<const ParamVector> local, const MappingRow& row,
                                                  std::size_t K, std::size_t first);

struct LocalStepConfig {
  double lr = 0.01;
  std::size_t epochs = 2;
  std::size_t batch_size = 64;
};

/// Per-step gradient log collected during local training, used by the
/// diagnostic constant estimator.
struct StepTrace {
  bool with_full_batch = false;  // also evaluate the full-batch gradient at every step
  bool keep_raw = false;         // retain the raw vectors for replay
  std::vector<double> minibatch_norms;
  std::vector<double> deviation_sq;   // ||g_minibatch - g_full||^2
  std::vector<double> secant_ratios;  // ||g_full(x') - g_full(x)|| / ||x' - x||
  std::vector<ParamVector> raw_params;  // parameters at which each step's gradient was taken
  std::vector<ParamVector> raw_minibatch;
  std::vector<ParamVector> raw_full;
};

/// Number of gradient steps one client takes per round.
std::size_t local_steps(std::size_t train_size, const LocalStepConfig& cfg);

/// Plain mini-batch gradient descent on the additive loss w.r.t. one level.
/// `frozen_logits` holds the train-set logits of every other level (may be empty).
ParamVector local_update_global(const Batch& train, const Matrix& frozen_logits, ParamVector theta,
                                const PredictorSpec& spec, const LocalStepConfig& cfg,
                                std::uint64_t seed, StepTrace* trace = nullptr);

/// Cluster-level step:
///   theta <- (1 - lr*lambda) theta + lr*lambda*centroid - lr*data_weight*grad
/// where data_weight is n_i/n as printed, or 1 when that factor is disabled.
ParamVector local_update_cluster(const Batch& train, const Matrix& frozen_logits, ParamVector theta,
                                 const ParamVector& centroid, double lambda, double data_weight,
                                 const PredictorSpec& spec, const LocalStepConfig& cfg,
                                 std::uint64_t seed, StepTrace* trace = nullptr);

/// Personalized level: same kernel as the global step; the result stays on the client.
ParamVector local_update_personalized(const Batch& train, const Matrix& frozen_logits,
                                      ParamVector theta, const PredictorSpec& spec,
                                      const LocalStepConfig& cfg, std::uint64_t seed,
                                      StepTrace* trace = nullptr);

/// EM objective: sum_i n_i/n sum_{cluster levels} ||theta_i - Theta_{C(i)}||^2.
/// `local[l][i]` is client i's parameter vector at level l; pruned pairs are skipped.
double em_objective_F(std::span<const LevelBank> banks, const MappingTable& mapping,
                      const std::vector<std::vector<ParamVector>>& local,
                      std::span<const double> counts);

/// FL objective: sum_i n_i/n * loss(train_i, sum_l Theta^(l)_{C_l(i)}).
double fl_objective_R(std::span<const Batch> train_sets, std::span<const LevelBank> banks,
                      const MappingTable& mapping, const PredictorSpec& spec);

/// (1 / (Q U)) * sqrt(sum of squared cluster-level distances / L).
double lr_bound_theorem1(std::span<const double> distances_sq, double Q, double U, double L);

/// min(theorem1_bound, (||g||^2 - B U^2) / (||g||^2 + sigma2) * 2 / beta). Negative
/// values mean the bound is vacuous for that step.
double lr_bound_theorem2(double grad_norm_sq, double B, double U, double sigma2, double beta,
                         double theorem1_bound);

}  // namespace femam
