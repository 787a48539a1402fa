#include "femam/cli.hpp"

#include <algorithm>

#include <CLI11.hpp>

#include "femam/baselines.hpp"
#include "femam/engine.hpp"
#include "femam/error.hpp"
#include "femam/experiment.hpp"
#include "femam/report.hpp"

namespace femam {

namespace fs = std::filesystem;

ShardBundle make_bundle(const ExperimentFile& e) {
  const Batch table = generate_dataset(e.dataset);
  const Partition part = make_partition(table, e.dataset.num_classes, e.partition);
  ShardBundle b;
  b.meta.dataset = e.dataset;
  b.meta.partition = e.partition;
  b.meta.truth = part.truth;
  b.meta.unassigned = part.unassigned.size();
  b.shards = make_client_shards(table, part, e.partition.val_fraction, e.partition.test_fraction, e.partition.seed);
  return b;
}

namespace {

ShardBundle load_or_make_shards(const ExperimentFile& e, const fs::path& root) {
  const fs::path dir = shard_dir(root);
  if (!fs::exists(dir / "metadata.json")) {
    ShardBundle b = make_bundle(e);
    write_shards(dir, b);
    return b;
  }
  ShardBundle b = read_shards(dir);
  if (to_json(b.meta.dataset) != to_json(e.dataset) || to_json(b.meta.partition) != to_json(e.partition))
    throw ConfigError("shards in " + dir.string() + " were generated from a different dataset/partition; rerun partition");
  return b;
}

Exec parse_exec_flag(const std::string& s) {
  if (s == "serial") return Exec::serial;
  if (s == "parallel") return Exec::parallel;
  throw ConfigError("--exec must be serial or parallel");
}

}  // namespace

fs::path cmd_partition(const fs::path& experiment_file) {
  const ExperimentFile e = load_experiment(experiment_file);
  const fs::path dir = shard_dir(resolve_output_root(e));
  write_shards(dir, make_bundle(e));
  return dir;
}

RunRecord cmd_run(const fs::path& experiment_file, const RunOptions& opt, fs::path* out_dir) {
  ExperimentFile e = load_experiment(experiment_file);
  if (opt.algorithm != "femam" && !is_baseline(opt.algorithm))
    throw ConfigError("unknown algorithm '" + opt.algorithm + "'");
  e.algorithm(opt.algorithm);  // throws when not listed
  auto& entry = *std::find_if(e.algorithms.begin(), e.algorithms.end(),
                              [&](const AlgorithmEntry& a) { return a.id == opt.algorithm; });
  entry.femam.seed = opt.seed;
  entry.baseline.seed = opt.seed;
  if (opt.exec) entry.femam.exec = entry.baseline.exec = parse_exec_flag(*opt.exec);

  const fs::path root = resolve_output_root(e);
  const ShardBundle bundle = load_or_make_shards(e, root);
  RunRecord rec = opt.algorithm == "femam" ? run_femam(bundle.shards, e.model, entry.femam)
                                           : run_baseline(bundle.shards, e.model, entry.baseline);
  const fs::path dir = run_dir(root, opt.algorithm, opt.seed);
  write_run(dir, rec, run_config_json(e, opt.algorithm, opt.seed));
  if (out_dir) *out_dir = dir;
  return rec;
}

DiagnosticsReport cmd_diag(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("run directory not found: " + dir.string());
  const auto rounds = read_metrics_csv(dir / "metrics.csv");
  const auto trace = read_trace_csv(dir / "trace.csv");
  DiagnosticsReport d = analyze_run(rounds, trace);
  write_json(dir / "diagnostics.json", diagnostics_json(d));
  return d;
}

fs::path cmd_report(const fs::path& experiment_file) {
  const ExperimentFile e = load_experiment(experiment_file);
  const fs::path root = resolve_output_root(e);
  std::vector<fs::path> dirs;
  for (const auto& a : e.algorithms)
    for (auto s : e.seeds) dirs.push_back(run_dir(root, a.id, s));
  build_report(dirs, report_dir(root));
  return report_dir(root);
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated multi-level additive modeling experiments"};
  app.require_subcommand(1);

  std::string experiment;
  auto* partition = app.add_subcommand("partition", "generate the synthetic dataset and client shards");
  partition->add_option("experiment", experiment, "experiment JSON file")->required();

  RunOptions run_opts;
  std::string exec;
  auto* run = app.add_subcommand("run", "run one algorithm for one seed");
  run->add_option("experiment", experiment, "experiment JSON file")->required();
  run->add_option("--algo", run_opts.algorithm, "femam, local, fedavg, fedavg+, fesem or fesem+")->required();
  run->add_option("--seed", run_opts.seed, "run seed");
  run->add_option("--exec", exec, "serial or parallel client loop");

  std::string run_path;
  auto* diag = app.add_subcommand("diag", "recompute diagnostics.json for a run directory");
  diag->add_option("run_dir", run_path, "run directory")->required();

  auto* report = app.add_subcommand("report", "summary table, curves and plots over all runs");
  report->add_option("experiment", experiment, "experiment JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*partition) {
      out << cmd_partition(experiment).string() << '\n';
    } else if (*run) {
      if (!exec.empty()) run_opts.exec = exec;
      fs::path dir;
      const RunRecord rec = cmd_run(experiment, run_opts, &dir);
      out << dir.string() << '\n'
          << "accuracy " << format_double(rec.final_eval.overall_accuracy) << " macro_f1 "
          << format_double(rec.final_eval.mean_macro_f1) << " rounds " << rec.rounds.size() << '\n';
      if (!rec.invariant_violations.empty()) {
        for (const auto& v : rec.invariant_violations) err << "invariant violation: " << v << '\n';
        return 1;
      }
    } else if (*diag) {
      const DiagnosticsReport d = cmd_diag(run_path);
      out << "U " << format_double(d.constants.U) << " B " << format_double(d.constants.B) << " beta "
          << format_double(d.constants.beta) << " sigma2 " << format_double(d.constants.sigma2) << '\n'
          << "violations " << d.violation_rounds.size() << " F_monotone " << (d.F_monotone ? "yes" : "no") << '\n';
    } else if (*report) {
      out << cmd_report(experiment).string() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvariantError& e) {
    err << "invariant violation: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace femam
