#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "femam/datagen.hpp"
#include "femam/diagnostics.hpp"
#include "femam/record.hpp"

namespace femam {

/// Shortest text that parses back to the same double ("inf", "-inf", "nan" included).
std::string format_double(double x);
/// Throws ConfigError mentioning `context` on malformed input.
double parse_double(std::string_view text, const std::string& context);

struct ShardMetadata {
  DatasetSpec dataset;
  PartitionSpec partition;
  GroundTruthStructure truth;
  std::size_t unassigned = 0;
};

struct ShardBundle {
  ShardMetadata meta;
  std::vector<ClientShard> shards;
};

/// metadata.json plus client_<id>_{train,val,test}.csv (features, then label).
void write_shards(const std::filesystem::path& dir, const ShardBundle& bundle);
ShardBundle read_shards(const std::filesystem::path& dir);

/// Writes every artifact of one run: config.json, metrics.csv, transfers.csv,
/// structure.csv, structure.json, mapping_log.csv, trace.csv, models.json,
/// final.json and diagnostics.json.
void write_run(const std::filesystem::path& dir, const RunRecord& record, const nlohmann::json& config);

/// Inverse of write_run for everything except config.json and diagnostics.json.
RunRecord read_run(const std::filesystem::path& dir);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RoundMetrics>& rounds);
std::vector<RoundMetrics> read_metrics_csv(const std::filesystem::path& path);

void write_trace_csv(const std::filesystem::path& path, const std::vector<ClientRoundTrace>& trace);
std::vector<ClientRoundTrace> read_trace_csv(const std::filesystem::path& path);

/// L lines of m comma-separated model ids; an empty cell is a pruned pair.
void write_structure_csv(const std::filesystem::path& path, const StructureMap& structure);
StructureMap read_structure_csv(const std::filesystem::path& path);

void write_mapping_log_csv(const std::filesystem::path& path, const std::vector<MappingEvent>& log);
std::vector<MappingEvent> read_mapping_log_csv(const std::filesystem::path& path);

nlohmann::json diagnostics_json(const DiagnosticsReport& report);
DiagnosticsReport parse_diagnostics(const nlohmann::json& doc);

}  // namespace femam
