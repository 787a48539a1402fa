#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "femam/metrics.hpp"
#include "femam/model.hpp"
#include "femam/protocol.hpp"

namespace femam {

struct RoundMetrics {
  std::size_t round = 0;  // global round index, 0-based
  std::size_t level = 0;  // 0-based index of the level being trained
  LevelKind kind = LevelKind::global;
  double accuracy = 0.0;  // sample-weighted test accuracy, percent
  double macro_f1 = 0.0;
  double val_loss = 0.0;  // sample-weighted validation loss
  double F = 0.0;         // EM objective after aggregation
  double R = 0.0;         // FL objective after aggregation
  double grad_norm_max = 0.0;
  double lr_bound_min = 0.0;  // smallest per-client step-size bound this round (cluster levels)
  bool lr_violation = false;  // some client stepped above its bound
  std::size_t active_clients = 0;
  std::size_t transfers = 0;  // models moved server<->client this round, both directions
};

/// One client's gradient statistics for one round.
struct ClientRoundTrace {
  std::size_t level = 0;
  std::size_t round = 0;
  std::size_t client = 0;
  int group = 0;  // model index the client trained against
  double weight = 0.0;  // n_i
  double start_grad_norm_sq = 0.0;
  double b_ratio = 0.0;  // ||mean group gradient - own gradient|| / ||mean group gradient||
  double max_minibatch_norm = 0.0;
  double max_deviation_sq = 0.0;
  double max_secant = 0.0;
  double lr_applied = 0.0;
  double lr_bound = 0.0;  // +inf when not applicable
  double distance_sq = 0.0;  // ||theta_i - Theta_{C(i)}||^2 after aggregation
  ParamVector start_grad;    // only with raw tracing
  StepTrace steps;           // raw vectors only with raw tracing
};

/// L x m matrix of model ids, kPruned for removed cells.
struct StructureMap {
  std::vector<std::vector<int>> cells;

  std::size_t num_levels() const { return cells.size(); }
  std::size_t num_clients() const { return cells.empty() ? 0 : cells.front().size(); }
};

/// Final mapping row of one level after one round, or after pruning.
struct MappingEvent {
  std::size_t level = 0;
  std::size_t round = 0;
  bool prune = false;
  MappingRow row;
};

struct RunRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> rounds;
  std::vector<std::size_t> level_add_rounds;  // first round index of each level
  StructureMap structure;
  std::vector<LevelBank> banks;
  MappingTable mapping;
  /// Each client's final additive model list, level order, pruned levels removed.
  std::vector<std::vector<ParamVector>> client_models;
  EvalResult final_eval;
  std::vector<double> final_val_loss;       // per client
  std::vector<double> level1_val_loss;      // per client, level-1 model only
  std::vector<ClientRoundTrace> trace;
  std::vector<MappingEvent> mapping_log;
  std::vector<std::string> invariant_violations;
};

}  // namespace femam
