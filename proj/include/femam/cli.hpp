#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "femam/diagnostics.hpp"
#include "femam/experiment.hpp"
#include "femam/io.hpp"
#include "femam/record.hpp"

namespace femam {

/// Dataset, partition and client shards of an experiment, in memory.
ShardBundle make_bundle(const ExperimentFile& experiment);

/// Generates the dataset and partition of an experiment and writes the shard
/// directory. Returns its path.
std::filesystem::path cmd_partition(const std::filesystem::path& experiment_file);

struct RunOptions {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::optional<std::string> exec;  // "serial" | "parallel"
};

/// Runs one (algorithm, seed) cell and writes its run directory. The shard
/// directory is created first when it does not exist yet; existing shards must
/// match the experiment file.
RunRecord cmd_run(const std::filesystem::path& experiment_file, const RunOptions& options,
                  std::filesystem::path* out_dir = nullptr);

/// Recomputes diagnostics.json from a run directory's metrics and trace.
DiagnosticsReport cmd_diag(const std::filesystem::path& run_dir);

/// Report over every (algorithm, seed) cell of the experiment.
std::filesystem::path cmd_report(const std::filesystem::path& experiment_file);

/// Entry point behind the `femam` executable. Returns the process exit code:
/// 0 success, 1 invariant violation or internal error, 2 user/config error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace femam
