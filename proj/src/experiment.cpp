#include "femam/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "femam/error.hpp"

namespace femam {

namespace {

using nlohmann::json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + " must be a number");
      out = v->get<double>();
    }
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        throw ConfigError(field(key) + " must be a nonnegative integer");
      out = v->get<std::size_t>();
    }
  }

  void get(const std::string& key, std::uint64_t& out, int) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key) + " must be a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  // Numbers, or the strings "inf" / "-inf" for unbounded thresholds.
  void get_extended(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else if (v->is_string() && (*v == "inf" || *v == "-inf")) {
        out = *v == "inf" ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      } else {
        throw ConfigError(field(key) + " must be a number or \"inf\"");
      }
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + field(it.key()));
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

Exec parse_exec(const std::string& s, const std::string& field) {
  if (s == "serial") return Exec::serial;
  if (s == "parallel") return Exec::parallel;
  throw ConfigError(field + " must be \"serial\" or \"parallel\"");
}

std::string exec_name(Exec e) { return e == Exec::serial ? "serial" : "parallel"; }

template <class F>
auto rethrow_as(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

DatasetSpec parse_dataset(const json& j) {
  DatasetSpec d;
  ObjectReader r(j, "dataset");
  r.get("num_classes", d.num_classes);
  r.get("samples_per_class", d.samples_per_class);
  r.get("input_dim", d.input_dim);
  r.get("noise_std", d.noise_std);
  r.get("seed", d.seed, 0);
  r.finish();
  d.validate();
  return d;
}

PartitionSpec parse_partition(const json& j) {
  PartitionSpec p;
  ObjectReader r(j, "partition");
  std::string kind = to_string(p.kind);
  r.get("kind", kind);
  p.kind = rethrow_as("partition.kind", [&] { return parse_partition_kind(kind); });
  r.get("num_clients", p.num_clients);
  r.get("classes_per_cluster", p.classes_per_cluster);
  r.get("num_clusters", p.num_clusters);
  r.get("alpha", p.alpha);
  if (const json* levels = r.find("levels")) {
    if (!levels->is_array()) throw ConfigError("partition.levels must be an array");
    for (std::size_t k = 0; k < levels->size(); ++k) {
      ClusterLevelSpec ls;
      ObjectReader lr((*levels)[k], "partition.levels[" + std::to_string(k) + "]");
      lr.get("classes_per_cluster", ls.classes_per_cluster);
      lr.get("num_clusters", ls.num_clusters);
      lr.finish();
      p.levels.push_back(ls);
    }
  }
  if (const json* w = r.find("level_weights")) {
    if (!w->is_array()) throw ConfigError("partition.level_weights must be an array");
    for (const auto& x : *w) {
      if (!x.is_number()) throw ConfigError("partition.level_weights must hold numbers");
      p.level_weights.push_back(x.get<double>());
    }
  }
  r.get("val_fraction", p.val_fraction);
  r.get("test_fraction", p.test_fraction);
  r.get("seed", p.seed, 0);
  r.finish();
  p.validate();
  return p;
}

PredictorSpec parse_model(const json& j, const DatasetSpec& d) {
  PredictorSpec s;
  s.input_dim = d.input_dim;
  s.num_classes = d.num_classes;
  ObjectReader r(j, "model");
  std::string kind = "linear";
  r.get("kind", kind);
  if (kind == "linear") {
    s.kind = PredictorKind::linear_softmax;
  } else if (kind == "mlp") {
    s.kind = PredictorKind::one_hidden_layer;
    s.hidden_dim = 16;
  } else {
    throw ConfigError("model.kind must be \"linear\" or \"mlp\"");
  }
  r.get("hidden_dim", s.hidden_dim);
  r.finish();
  if (s.kind == PredictorKind::linear_softmax) s.hidden_dim = 0;
  rethrow_as("model", [&] { s.validate(); return 0; });
  return s;
}

EngineConfig parse_engine(ObjectReader& r, const std::string& path) {
  EngineConfig c;
  if (const json* sched = r.find("schedule")) {
    if (!sched->is_array()) throw ConfigError(path + ".schedule must be an array");
    c.schedule.clear();
    for (const auto& s : *sched) {
      if (!s.is_string()) throw ConfigError(path + ".schedule must hold level kind names");
      c.schedule.push_back(rethrow_as(path + ".schedule", [&] { return parse_level_kind(s.get<std::string>()); }));
    }
  }
  r.get("clusters_per_level", c.clusters_per_level);
  r.get("lr", c.lr);
  r.get("local_epochs", c.local_epochs);
  r.get("batch_size", c.batch_size);
  r.get("lambda", c.lambda);
  r.get("weight_by_share", c.weight_by_share);
  r.get("level1_rounds", c.level1_rounds);
  r.get("max_rounds_per_level", c.max_rounds_per_level);
  r.get("window", c.window);
  r.get("variance_threshold", c.variance_threshold);
  r.get_extended("prune_epsilon", c.prune_epsilon);
  r.get("init_scale", c.init_scale);
  r.get("seed_centroids", c.seed_centroids);
  r.get("clamp_lr", c.clamp_lr_theorem1);
  r.get("trace_gradients", c.trace_gradients);
  std::string exec = exec_name(c.exec);
  r.get("exec", exec);
  c.exec = parse_exec(exec, path + ".exec");
  r.finish();
  rethrow_as(path, [&] { c.validate(); return 0; });
  return c;
}

BaselineConfig parse_baseline(ObjectReader& r, const std::string& id, const std::string& path) {
  BaselineConfig c;
  c.algorithm = id;
  r.get("rounds", c.rounds);
  r.get("lr", c.lr);
  r.get("local_epochs", c.local_epochs);
  r.get("batch_size", c.batch_size);
  r.get("clusters", c.clusters);
  r.get("lambda", c.lambda);
  r.get("weight_by_share", c.weight_by_share);
  r.get("seed_centroids", c.seed_centroids);
  r.get("finetune_epochs", c.finetune_epochs);
  std::string exec = exec_name(c.exec);
  r.get("exec", exec);
  c.exec = parse_exec(exec, path + ".exec");
  r.finish();
  rethrow_as(path, [&] { c.validate(); return 0; });
  return c;
}

}  // namespace

const AlgorithmEntry& ExperimentFile::algorithm(const std::string& id) const {
  for (const auto& a : algorithms)
    if (a.id == id) return a;
  throw ConfigError("algorithm '" + id + "' is not listed in the experiment file");
}

ExperimentFile parse_experiment(const nlohmann::json& doc) {
  ExperimentFile e;
  ObjectReader r(doc, "");
  const json* dataset = r.find("dataset");
  if (!dataset) throw ConfigError("dataset is required");
  e.dataset = parse_dataset(*dataset);
  const json* partition = r.find("partition");
  if (!partition) throw ConfigError("partition is required");
  e.partition = parse_partition(*partition);
  const json empty_obj = json::object();
  const json* model = r.find("model");
  e.model = parse_model(model ? *model : empty_obj, e.dataset);

  const json* algos = r.find("algorithms");
  if (!algos || !algos->is_array() || algos->empty())
    throw ConfigError("algorithms must be a non-empty array");
  for (std::size_t k = 0; k < algos->size(); ++k) {
    const std::string path = "algorithms[" + std::to_string(k) + "]";
    ObjectReader ar((*algos)[k], path);
    AlgorithmEntry entry;
    ar.get("id", entry.id);
    if (entry.id.empty()) throw ConfigError(path + ".id is required");
    for (const auto& prev : e.algorithms)
      if (prev.id == entry.id) throw ConfigError(path + ".id '" + entry.id + "' is listed twice");
    if (entry.id == "femam") {
      entry.femam = parse_engine(ar, path);
    } else if (is_baseline(entry.id)) {
      entry.baseline = parse_baseline(ar, entry.id, path);
    } else {
      throw ConfigError(path + ".id: unknown algorithm '" + entry.id + "'");
    }
    e.algorithms.push_back(std::move(entry));
  }

  if (const json* seeds = r.find("seeds")) {
    if (!seeds->is_array() || seeds->empty()) throw ConfigError("seeds must be a non-empty array");
    e.seeds.clear();
    for (const auto& s : *seeds) {
      if (!s.is_number_unsigned()) throw ConfigError("seeds must hold nonnegative integers");
      e.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  r.get("output_root", e.output_root);
  r.finish();
  return e;
}

ExperimentFile load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment(doc);
}

std::filesystem::path resolve_output_root(const ExperimentFile& experiment) {
  if (const char* env = std::getenv("FEMAM_OUT"); env && *env) return env;
  return experiment.output_root;
}

std::filesystem::path shard_dir(const std::filesystem::path& root) { return root / "shards"; }

std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& algorithm,
                              std::uint64_t seed) {
  return root / "runs" / (algorithm + "_seed" + std::to_string(seed));
}

std::filesystem::path report_dir(const std::filesystem::path& root) { return root / "report"; }

nlohmann::json to_json(const DatasetSpec& d) {
  return {{"num_classes", d.num_classes}, {"samples_per_class", d.samples_per_class},
          {"input_dim", d.input_dim},     {"noise_std", d.noise_std},
          {"seed", d.seed}};
}

nlohmann::json to_json(const PartitionSpec& p) {
  json levels = json::array();
  for (const auto& l : p.levels)
    levels.push_back({{"classes_per_cluster", l.classes_per_cluster}, {"num_clusters", l.num_clusters}});
  return {{"kind", to_string(p.kind)},
          {"num_clients", p.num_clients},
          {"classes_per_cluster", p.classes_per_cluster},
          {"num_clusters", p.num_clusters},
          {"alpha", p.alpha},
          {"levels", levels},
          {"level_weights", p.level_weights},
          {"val_fraction", p.val_fraction},
          {"test_fraction", p.test_fraction},
          {"seed", p.seed}};
}

nlohmann::json to_json(const PredictorSpec& s) {
  return {{"kind", s.kind == PredictorKind::linear_softmax ? "linear" : "mlp"},
          {"hidden_dim", s.hidden_dim}};
}

namespace {

json extended(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

}  // namespace

nlohmann::json to_json(const EngineConfig& c) {
  json schedule = json::array();
  for (auto k : c.schedule) schedule.push_back(to_string(k));
  return {{"schedule", schedule},
          {"clusters_per_level", c.clusters_per_level},
          {"lr", c.lr},
          {"local_epochs", c.local_epochs},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"weight_by_share", c.weight_by_share},
          {"level1_rounds", c.level1_rounds},
          {"max_rounds_per_level", c.max_rounds_per_level},
          {"window", c.window},
          {"variance_threshold", c.variance_threshold},
          {"prune_epsilon", extended(c.prune_epsilon)},
          {"init_scale", c.init_scale},
          {"seed_centroids", c.seed_centroids},
          {"clamp_lr", c.clamp_lr_theorem1},
          {"trace_gradients", c.trace_gradients},
          {"exec", exec_name(c.exec)}};
}

nlohmann::json to_json(const BaselineConfig& c) {
  return {{"rounds", c.rounds},
          {"lr", c.lr},
          {"local_epochs", c.local_epochs},
          {"batch_size", c.batch_size},
          {"clusters", c.clusters},
          {"lambda", c.lambda},
          {"weight_by_share", c.weight_by_share},
          {"seed_centroids", c.seed_centroids},
          {"finetune_epochs", c.finetune_epochs},
          {"exec", exec_name(c.exec)}};
}

nlohmann::json to_json(const ExperimentFile& e) {
  json algos = json::array();
  for (const auto& a : e.algorithms) {
    json j = a.id == "femam" ? to_json(a.femam) : to_json(a.baseline);
    j["id"] = a.id;
    algos.push_back(std::move(j));
  }
  return {{"dataset", to_json(e.dataset)}, {"partition", to_json(e.partition)},
          {"model", to_json(e.model)},     {"algorithms", algos},
          {"seeds", e.seeds},              {"output_root", e.output_root}};
}

nlohmann::json run_config_json(const ExperimentFile& e, const std::string& algorithm, std::uint64_t seed) {
  const AlgorithmEntry& a = e.algorithm(algorithm);
  return {{"algorithm", algorithm},
          {"seed", seed},
          {"dataset", to_json(e.dataset)},
          {"partition", to_json(e.partition)},
          {"model", to_json(e.model)},
          {"config", algorithm == "femam" ? to_json(a.femam) : to_json(a.baseline)}};
}

}  // namespace femam
