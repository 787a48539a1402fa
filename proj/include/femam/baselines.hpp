#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "femam/engine.hpp"

namespace femam {

struct BaselineConfig {
  std::string algorithm = "fedavg";  // local | fedavg | fedavg+ | fesem | fesem+
  std::size_t rounds = 400;
  double lr = 0.01;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 64;
  std::size_t clusters = 5;       // FeSEM only
  double lambda = 0.1;            // FeSEM proximal weight
  bool weight_by_share = true;    // FeSEM n_i/n factor
  bool seed_centroids = true;     // FeSEM farthest-first seeding after the first round
  std::size_t finetune_epochs = 2;  // "+" variants
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;

  void validate() const;
};

/// Independent per-client training, no communication.
RunRecord run_local(std::span<const ClientShard> shards, const PredictorSpec& spec,
                    const BaselineConfig& config, const RoundObserver& observer = {});

/// One global model: broadcast, local steps, sample-weighted aggregation.
RunRecord run_fedavg(std::span<const ClientShard> shards, const PredictorSpec& spec,
                     const BaselineConfig& config, const RoundObserver& observer = {});

/// K cluster models with nearest-centroid reassignment every round and the
/// proximal cluster-level local step.
RunRecord run_fesem(std::span<const ClientShard> shards, const PredictorSpec& spec,
                    const BaselineConfig& config, const RoundObserver& observer = {});

/// Fine-tunes a per-client copy of each client's final model for `epochs`
/// local epochs and re-evaluates. Per-round history is carried over unchanged.
RunRecord finetune_plus(const RunRecord& base, std::span<const ClientShard> shards,
                        const PredictorSpec& spec, const BaselineConfig& config, std::size_t epochs);

/// Dispatches on config.algorithm, applying finetune_plus for "+" variants.
RunRecord run_baseline(std::span<const ClientShard> shards, const PredictorSpec& spec,
                       const BaselineConfig& config, const RoundObserver& observer = {});

bool is_baseline(const std::string& algorithm);

}  // namespace femam
