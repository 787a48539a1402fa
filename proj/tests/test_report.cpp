#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "femam/baselines.hpp"
#include "femam/error.hpp"
#include "femam/io.hpp"
#include "femam/report.hpp"
#include "support.hpp"

using namespace femam;
using namespace femam::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Report, MeanStdIsPopulation) {
  const auto [m, s] = mean_std({1.0, 3.0});
  EXPECT_DOUBLE_EQ(m, 2.0);
  EXPECT_DOUBLE_EQ(s, 1.0);
  const auto [m1, s1] = mean_std({4.0});
  EXPECT_DOUBLE_EQ(m1, 4.0);
  EXPECT_DOUBLE_EQ(s1, 0.0);
}

TEST(Report, SummaryCurvesAndPlots) {
  TempDir dir("report");
  const Scenario sc = small_scenario();
  std::vector<std::filesystem::path> runs;
  std::vector<double> acc;
  for (std::uint64_t seed : {0, 1}) {
    BaselineConfig b;
    b.algorithm = "fedavg";
    b.rounds = 4;
    b.lr = 0.1;
    b.seed = seed;
    const RunRecord r = run_baseline(sc.shards, sc.spec, b);
    acc.push_back(r.final_eval.overall_accuracy);
    runs.push_back(dir.path() / "runs" / ("fedavg_seed" + std::to_string(seed)));
    write_run(runs.back(), r, {{"algorithm", "fedavg"}, {"seed", seed}});
  }
  const auto rows = build_report(runs, dir.path() / "report");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].algorithm, "fedavg");
  EXPECT_EQ(rows[0].runs, 2u);
  const auto [m, s] = mean_std(acc);
  EXPECT_DOUBLE_EQ(rows[0].accuracy_mean, m);
  EXPECT_DOUBLE_EQ(rows[0].accuracy_std, s);
  EXPECT_GE(rows[0].best_accuracy_mean, rows[0].accuracy_mean);

  const std::string summary = slurp(dir.path() / "report" / "summary.csv");
  EXPECT_EQ(summary.rfind("algorithm,runs,accuracy_mean,accuracy_std", 0), 0u);
  EXPECT_NE(summary.find("\nfedavg,2,"), std::string::npos);

  const std::string curve = slurp(dir.path() / "report" / "curves" / "fedavg_seed0.csv");
  EXPECT_EQ(curve.rfind("round,level,accuracy,macro_f1,val_loss,F,R,level_add\n", 0), 0u);
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 5);

  const std::string svg = slurp(dir.path() / "report" / "plots" / "fedavg_seed1.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

TEST(Report, MissingRunDirectoryNamesPath) {
  TempDir dir("report_missing");
  try {
    build_report({dir.path() / "runs" / "nope_seed0"}, dir.path() / "report");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope_seed0"), std::string::npos);
  }
}
