#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include <unistd.h>

#include "femam/datagen.hpp"
#include "femam/model.hpp"
#include "femam/rng.hpp"

namespace femam::testing {

inline PredictorSpec linear_spec(std::size_t d, std::size_t c) {
  PredictorSpec s;
  s.kind = PredictorKind::linear_softmax;
  s.input_dim = d;
  s.num_classes = c;
  return s;
}

inline PredictorSpec mlp_spec(std::size_t d, std::size_t h, std::size_t c) {
  PredictorSpec s;
  s.kind = PredictorKind::one_hidden_layer;
  s.input_dim = d;
  s.hidden_dim = h;
  s.num_classes = c;
  return s;
}

inline Batch random_batch(std::size_t n, std::size_t d, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Batch b;
  b.features = Matrix(n, d);
  for (double& x : b.features.data) x = g(rng);
  b.labels.resize(n);
  for (auto& y : b.labels) y = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, c - 1)(rng));
  return b;
}

inline ParamVector random_params(std::size_t dim, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  ParamVector p(dim);
  for (double& v : p.values) v = g(rng);
  return p;
}

struct Scenario {
  std::vector<ClientShard> shards;
  GroundTruthStructure truth;
  PredictorSpec spec;
};

inline Scenario make_scenario(const DatasetSpec& d, const PartitionSpec& p) {
  Scenario s;
  const Batch table = generate_dataset(d);
  const Partition part = make_partition(table, d.num_classes, p);
  s.shards = make_client_shards(table, part, p.val_fraction, p.test_fraction, p.seed);
  s.truth = part.truth;
  s.spec = linear_spec(d.input_dim, d.num_classes);
  return s;
}

/// Small Dirichlet scenario for fast engine/baseline tests.
inline Scenario small_scenario(std::size_t clients = 6, std::uint64_t seed = 1) {
  DatasetSpec d;
  d.num_classes = 4;
  d.samples_per_class = 30 * clients / 2;
  d.input_dim = 5;
  d.seed = seed;
  PartitionSpec p;
  p.kind = PartitionKind::dirichlet;
  p.alpha = 0.5;
  p.num_clients = clients;
  p.seed = seed;
  return make_scenario(d, p);
}

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("femam_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace femam::testing
