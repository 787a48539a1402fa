#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "femam/model.hpp"

namespace femam {

struct DatasetSpec {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 100;
  std::size_t input_dim = 16;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class means: one row per class, each coordinate drawn from N(0, 1).
Matrix class_means(const DatasetSpec& spec);

/// Gaussian class-conditional samples, `samples_per_class` per class, rows
/// ordered by class. Deterministic in `spec.seed`.
Batch generate_dataset(const DatasetSpec& spec);

enum class PartitionKind { cluster_wise, dirichlet, multi_level, iid };

PartitionKind parse_partition_kind(const std::string& name);
std::string to_string(PartitionKind kind);

struct ClusterLevelSpec {
  std::size_t classes_per_cluster = 1;
  std::size_t num_clusters = 1;
};

struct PartitionSpec {
  PartitionKind kind = PartitionKind::iid;
  std::size_t num_clients = 20;
  // cluster-wise
  std::size_t classes_per_cluster = 2;
  std::size_t num_clusters = 5;
  // dirichlet
  double alpha = 0.1;
  // multi-level; empty weights mean inverse cluster count per level
  std::vector<ClusterLevelSpec> levels;
  std::vector<double> level_weights;
  // splits
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per level, client -> ground-truth cluster id (contiguous from 0).
struct GroundTruthStructure {
  std::vector<std::vector<int>> levels;
};

/// Row indices into the sample table. `unassigned` holds rows no client
/// received (classes no cluster claimed, or mass trimmed to honor level
/// weights); shards plus `unassigned` partition the table exactly.
struct Partition {
  std::vector<std::vector<std::size_t>> client_rows;
  std::vector<std::size_t> unassigned;
  GroundTruthStructure truth;
};

Partition partition_cluster_wise(std::span<const int> labels, std::size_t num_classes,
                                 std::size_t classes_per_cluster, std::size_t num_clusters,
                                 std::size_t num_clients, std::uint64_t seed);

Partition partition_dirichlet(std::span<const int> labels, std::size_t num_classes, double alpha,
                              std::size_t num_clients, std::uint64_t seed);

Partition partition_multi_level(std::span<const int> labels, std::size_t num_classes,
                                std::span<const ClusterLevelSpec> level_specs,
                                std::span<const double> level_weights, std::size_t num_clients,
                                std::uint64_t seed);

Partition partition_iid(std::span<const int> labels, std::size_t num_clients, std::uint64_t seed);

/// Dispatch on `spec.kind`.
Partition make_partition(const Batch& table, std::size_t num_classes, const PartitionSpec& spec);

/// Default level weights: 1/num_clusters per level, normalized.
std::vector<double> default_level_weights(std::span<const ClusterLevelSpec> level_specs);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Stratified, deterministic split of a shard's labels. Sizes are
/// round(n * val_fraction) and round(n * test_fraction); the rest trains.
SplitIndices split_train_val_test(std::span<const int> labels, double val_fraction,
                                  double test_fraction, std::uint64_t seed);

struct ClientShard {
  std::size_t client_id = 0;
  Batch train;
  Batch validation;
  Batch test;

  std::size_t n() const { return train.size(); }
};

std::vector<ClientShard> make_client_shards(const Batch& table, const Partition& partition,
                                            double val_fraction, double test_fraction,
                                            std::uint64_t seed);

}  // namespace femam
