#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "femam/baselines.hpp"
#include "femam/datagen.hpp"
#include "femam/engine.hpp"

namespace femam {

/// One entry of the experiment's algorithm list. Exactly one of the two
/// configs is meaningful, selected by `id`.
struct AlgorithmEntry {
  std::string id;  // femam | local | fedavg | fedavg+ | fesem | fesem+
  EngineConfig femam;
  BaselineConfig baseline;
};

struct ExperimentFile {
  DatasetSpec dataset;
  PartitionSpec partition;
  PredictorSpec model;  // input_dim and num_classes follow the dataset
  std::vector<AlgorithmEntry> algorithms;
  std::vector<std::uint64_t> seeds{0};
  std::string output_root = "femam_out";

  const AlgorithmEntry& algorithm(const std::string& id) const;
};

/// Validates the whole document before returning. Unknown keys and bad
/// values raise ConfigError naming the dotted field path.
ExperimentFile parse_experiment(const nlohmann::json& doc);
ExperimentFile load_experiment(const std::filesystem::path& path);

/// FEMAM_OUT when set, otherwise the file's output_root.
std::filesystem::path resolve_output_root(const ExperimentFile& experiment);

std::filesystem::path shard_dir(const std::filesystem::path& root);
std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& algorithm,
                              std::uint64_t seed);
std::filesystem::path report_dir(const std::filesystem::path& root);

nlohmann::json to_json(const DatasetSpec& spec);
nlohmann::json to_json(const PartitionSpec& spec);
nlohmann::json to_json(const PredictorSpec& spec);
nlohmann::json to_json(const EngineConfig& config);
nlohmann::json to_json(const BaselineConfig& config);
nlohmann::json to_json(const ExperimentFile& experiment);

/// Resolved per-run configuration written next to the run artifacts.
nlohmann::json run_config_json(const ExperimentFile& experiment, const std::string& algorithm,
                               std::uint64_t seed);

}  // namespace femam
