#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace femam {

struct SummaryRow {
  std::string algorithm;
  std::size_t runs = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // population std over seeds
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
  double best_accuracy_mean = 0.0;  // best per-round accuracy of each run
  double best_accuracy_std = 0.0;
};

/// Reads each run directory and writes summary.csv, curves/<run>.csv and
/// plots/<run>.svg under `out_dir`. Runs are grouped by the algorithm id in
/// their config.json, in first-seen order. A missing run directory raises
/// ConfigError naming the path.
std::vector<SummaryRow> build_report(const std::vector<std::filesystem::path>& run_dirs,
                                     const std::filesystem::path& out_dir);

/// Mean and population standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

}  // namespace femam
