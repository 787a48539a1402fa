#include "femam/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "femam/engine.hpp"
#include "femam/error.hpp"
#include "femam/experiment.hpp"

namespace femam {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(context + ": malformed number '" + std::string(text) + "'");
  return x;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

long long parse_int(std::string_view text, const std::string& context) {
  long long v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(context + ": malformed integer '" + std::string(text) + "'");
  return v;
}

std::size_t parse_size(std::string_view text, const std::string& context) {
  const long long v = parse_int(text, context);
  if (v < 0) throw ConfigError(context + ": negative count '" + std::string(text) + "'");
  return static_cast<std::size_t>(v);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// Header line plus data rows; throws when the header differs from `expected`.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != expected)
    throw ConfigError(path.string() + ": unexpected header");
  const std::size_t width = split(expected).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != width)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                        " fields");
    rows.emplace_back(cells.begin(), cells.end());
  }
  return rows;
}

void write_batch_csv(const fs::path& path, const Batch& b) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < b.features.cols; ++c) out << 'x' << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (double v : b.features.row(r)) out << format_double(v) << ',';
    out << b.labels[r] << '\n';
  }
}

Batch read_batch_csv(const fs::path& path, std::size_t dim) {
  std::string header;
  for (std::size_t c = 0; c < dim; ++c) header += "x" + std::to_string(c) + ",";
  header += "label";
  const auto rows = read_csv(path, header);
  Batch b;
  b.features = Matrix(rows.size(), dim);
  b.labels.resize(rows.size());
  const std::string ctx = path.string();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) b.features(r, c) = parse_double(rows[r][c], ctx);
    b.labels[r] = static_cast<int>(parse_int(rows[r][dim], ctx));
  }
  return b;
}

std::string client_file(std::size_t id, const char* split_name) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "client_%03zu_%s.csv", id, split_name);
  return buf;
}

template <class T>
T json_get(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(ctx + ": missing '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + ": bad '" + key + "': " + e.what());
  }
}

json params_json(const ParamVector& p) { return p.values; }

ParamVector params_from(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw ConfigError(ctx + ": parameter vector must be an array");
  ParamVector p;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(ctx + ": non-numeric parameter");
    p.values.push_back(v.get<double>());
  }
  return p;
}

// Bounds may be +inf; JSON stores those as null.
json bound_json(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double bound_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& value) { write_text(path, value.dump(2) + "\n"); }

void write_shards(const fs::path& dir, const ShardBundle& bundle) {
  fs::create_directories(dir);
  json clients = json::array();
  for (const auto& s : bundle.shards) {
    write_batch_csv(dir / client_file(s.client_id, "train"), s.train);
    write_batch_csv(dir / client_file(s.client_id, "val"), s.validation);
    write_batch_csv(dir / client_file(s.client_id, "test"), s.test);
    clients.push_back({{"id", s.client_id},
                       {"train", s.train.size()},
                       {"val", s.validation.size()},
                       {"test", s.test.size()}});
  }
  json meta = {{"dataset", to_json(bundle.meta.dataset)},
               {"partition", to_json(bundle.meta.partition)},
               {"ground_truth", bundle.meta.truth.levels},
               {"num_ground_truth_clusters", json::array()},
               {"unassigned", bundle.meta.unassigned},
               {"clients", clients}};
  for (const auto& level : bundle.meta.truth.levels) {
    int k = 0;
    for (int c : level) k = std::max(k, c + 1);
    meta["num_ground_truth_clusters"].push_back(k);
  }
  write_json(dir / "metadata.json", meta);
}

ShardBundle read_shards(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("shard directory not found: " + dir.string());
  const json meta = read_json(dir / "metadata.json");
  const std::string ctx = (dir / "metadata.json").string();
  ShardBundle b;
  const json* ds = meta.contains("dataset") ? &meta["dataset"] : nullptr;
  const json* ps = meta.contains("partition") ? &meta["partition"] : nullptr;
  if (!ds || !ps) throw ConfigError(ctx + ": missing dataset or partition");
  json doc = {{"dataset", *ds}, {"partition", *ps}, {"algorithms", json::array({{{"id", "fedavg"}}})}};
  const ExperimentFile e = parse_experiment(doc);
  b.meta.dataset = e.dataset;
  b.meta.partition = e.partition;
  b.meta.truth.levels = json_get<std::vector<std::vector<int>>>(meta, "ground_truth", ctx);
  b.meta.unassigned = json_get<std::size_t>(meta, "unassigned", ctx);
  const json clients = json_get<json>(meta, "clients", ctx);
  for (const auto& c : clients) {
    ClientShard s;
    s.client_id = json_get<std::size_t>(c, "id", ctx);
    s.train = read_batch_csv(dir / client_file(s.client_id, "train"), e.dataset.input_dim);
    s.validation = read_batch_csv(dir / client_file(s.client_id, "val"), e.dataset.input_dim);
    s.test = read_batch_csv(dir / client_file(s.client_id, "test"), e.dataset.input_dim);
    if (s.train.size() != json_get<std::size_t>(c, "train", ctx) ||
        s.validation.size() != json_get<std::size_t>(c, "val", ctx) ||
        s.test.size() != json_get<std::size_t>(c, "test", ctx))
      throw ConfigError(ctx + ": sample counts of client " + std::to_string(s.client_id) + " do not match files");
    b.shards.push_back(std::move(s));
  }
  return b;
}

namespace {

const char* kMetricsHeader =
    "round,level,kind,accuracy,macro_f1,val_loss,F,R,grad_norm_max,lr_bound_min,lr_violation,"
    "active_clients,transfers";
const char* kTraceHeader =
    "level,round,client,group,weight,start_grad_norm_sq,b_ratio,max_minibatch_norm,max_deviation_sq,"
    "max_secant,lr_applied,lr_bound,distance_sq";

}  // namespace

void write_metrics_csv(const fs::path& path, const std::vector<RoundMetrics>& rounds) {
  auto out = open_out(path);
  out << kMetricsHeader << '\n';
  for (const auto& m : rounds) {
    out << m.round << ',' << m.level << ',' << to_string(m.kind) << ',' << format_double(m.accuracy) << ','
        << format_double(m.macro_f1) << ',' << format_double(m.val_loss) << ',' << format_double(m.F) << ','
        << format_double(m.R) << ',' << format_double(m.grad_norm_max) << ',' << format_double(m.lr_bound_min)
        << ',' << (m.lr_violation ? 1 : 0) << ',' << m.active_clients << ',' << m.transfers << '\n';
  }
}

std::vector<RoundMetrics> read_metrics_csv(const fs::path& path) {
  const std::string ctx = path.string();
  std::vector<RoundMetrics> out;
  for (const auto& r : read_csv(path, kMetricsHeader)) {
    RoundMetrics m;
    m.round = parse_size(r[0], ctx);
    m.level = parse_size(r[1], ctx);
    try {
      m.kind = parse_level_kind(r[2]);
    } catch (const std::exception&) {
      throw ConfigError(ctx + ": unknown level kind '" + r[2] + "'");
    }
    m.accuracy = parse_double(r[3], ctx);
    m.macro_f1 = parse_double(r[4], ctx);
    m.val_loss = parse_double(r[5], ctx);
    m.F = parse_double(r[6], ctx);
    m.R = parse_double(r[7], ctx);
    m.grad_norm_max = parse_double(r[8], ctx);
    m.lr_bound_min = parse_double(r[9], ctx);
    m.lr_violation = parse_int(r[10], ctx) != 0;
    m.active_clients = parse_size(r[11], ctx);
    m.transfers = parse_size(r[12], ctx);
    out.push_back(m);
  }
  return out;
}

void write_trace_csv(const fs::path& path, const std::vector<ClientRoundTrace>& trace) {
  auto out = open_out(path);
  out << kTraceHeader << '\n';
  for (const auto& t : trace) {
    out << t.level << ',' << t.round << ',' << t.client << ',' << t.group << ',' << format_double(t.weight) << ','
        << format_double(t.start_grad_norm_sq) << ',' << format_double(t.b_ratio) << ','
        << format_double(t.max_minibatch_norm) << ',' << format_double(t.max_deviation_sq) << ','
        << format_double(t.max_secant) << ',' << format_double(t.lr_applied) << ',' << format_double(t.lr_bound)
        << ',' << format_double(t.distance_sq) << '\n';
  }
}

std::vector<ClientRoundTrace> read_trace_csv(const fs::path& path) {
  const std::string ctx = path.string();
  std::vector<ClientRoundTrace> out;
  for (const auto& r : read_csv(path, kTraceHeader)) {
    ClientRoundTrace t;
    t.level = parse_size(r[0], ctx);
    t.round = parse_size(r[1], ctx);
    t.client = parse_size(r[2], ctx);
    t.group = static_cast<int>(parse_int(r[3], ctx));
    t.weight = parse_double(r[4], ctx);
    t.start_grad_norm_sq = parse_double(r[5], ctx);
    t.b_ratio = parse_double(r[6], ctx);
    t.max_minibatch_norm = parse_double(r[7], ctx);
    t.max_deviation_sq = parse_double(r[8], ctx);
    t.max_secant = parse_double(r[9], ctx);
    t.lr_applied = parse_double(r[10], ctx);
    t.lr_bound = parse_double(r[11], ctx);
    t.distance_sq = parse_double(r[12], ctx);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

std::string row_text(const MappingRow& row) {
  std::string s;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) s += ',';
    if (row[i] != kPruned) s += std::to_string(row[i]);
  }
  return s;
}

MappingRow parse_row(std::span<const std::string_view> cells, const std::string& ctx) {
  MappingRow row;
  for (auto c : cells) {
    if (c.empty()) {
      row.push_back(kPruned);
    } else {
      const long long v = parse_int(c, ctx);
      if (v < 0) throw ConfigError(ctx + ": negative model id");
      row.push_back(static_cast<int>(v));
    }
  }
  return row;
}

}  // namespace

void write_structure_csv(const fs::path& path, const StructureMap& structure) {
  auto out = open_out(path);
  for (const auto& row : structure.cells) out << row_text(row) << '\n';
}

StructureMap read_structure_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  StructureMap s;
  std::string line;
  while (std::getline(in, line)) {
    const auto cells = split(line);
    s.cells.push_back(parse_row(cells, path.string()));
    if (s.cells.back().size() != s.cells.front().size())
      throw ConfigError(path.string() + ": ragged structure rows");
  }
  return s;
}

void write_mapping_log_csv(const fs::path& path, const std::vector<MappingEvent>& log) {
  auto out = open_out(path);
  out << "level,round,prune,mapping\n";
  for (const auto& e : log) out << e.level << ',' << e.round << ',' << (e.prune ? 1 : 0) << ',' << row_text(e.row) << '\n';
}

std::vector<MappingEvent> read_mapping_log_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  const std::string ctx = path.string();
  std::string line;
  if (!std::getline(in, line) || line != "level,round,prune,mapping") throw ConfigError(ctx + ": unexpected header");
  std::vector<MappingEvent> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() < 4) throw ConfigError(ctx + ": short mapping row");
    MappingEvent e;
    e.level = parse_size(cells[0], ctx);
    e.round = parse_size(cells[1], ctx);
    e.prune = parse_int(cells[2], ctx) != 0;
    e.row = parse_row(std::span(cells).subspan(3), ctx);
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json diagnostics_json(const DiagnosticsReport& d) {
  json bounds = json::array();
  for (double b : d.theorem1_bound) bounds.push_back(bound_json(b));
  return {{"U", d.constants.U},
          {"B", d.constants.B},
          {"beta", d.constants.beta},
          {"sigma2", d.constants.sigma2},
          {"rounds", d.rounds},
          {"theorem1_bound", bounds},
          {"violation_rounds", d.violation_rounds},
          {"F_monotone", d.F_monotone},
          {"F_increase_rounds", d.F_increase_rounds}};
}

DiagnosticsReport parse_diagnostics(const nlohmann::json& doc) {
  const std::string ctx = "diagnostics.json";
  DiagnosticsReport d;
  d.constants.U = json_get<double>(doc, "U", ctx);
  d.constants.B = json_get<double>(doc, "B", ctx);
  d.constants.beta = json_get<double>(doc, "beta", ctx);
  d.constants.sigma2 = json_get<double>(doc, "sigma2", ctx);
  d.rounds = json_get<std::vector<std::size_t>>(doc, "rounds", ctx);
  for (const auto& b : json_get<json>(doc, "theorem1_bound", ctx)) d.theorem1_bound.push_back(bound_from(b));
  d.violation_rounds = json_get<std::vector<std::size_t>>(doc, "violation_rounds", ctx);
  d.F_monotone = json_get<bool>(doc, "F_monotone", ctx);
  d.F_increase_rounds = json_get<std::vector<std::size_t>>(doc, "F_increase_rounds", ctx);
  return d;
}

void write_run(const fs::path& dir, const RunRecord& rec, const nlohmann::json& config) {
  fs::create_directories(dir);
  write_json(dir / "config.json", config);
  write_metrics_csv(dir / "metrics.csv", rec.rounds);
  {
    auto out = open_out(dir / "transfers.csv");
    out << "round,active_clients,transfers\n";
    for (const auto& m : rec.rounds) out << m.round << ',' << m.active_clients << ',' << m.transfers << '\n';
  }
  write_structure_csv(dir / "structure.csv", rec.structure);
  write_json(dir / "structure.json", {{"num_levels", rec.structure.num_levels()},
                                      {"num_clients", rec.structure.num_clients()},
                                      {"level_add_rounds", rec.level_add_rounds},
                                      {"boundaries", structure_boundaries(rec.structure)}});
  write_mapping_log_csv(dir / "mapping_log.csv", rec.mapping_log);
  write_trace_csv(dir / "trace.csv", rec.trace);

  json banks = json::array();
  for (const auto& b : rec.banks) {
    json models = json::array();
    for (const auto& p : b.models) models.push_back(params_json(p));
    banks.push_back({{"level", b.level}, {"kind", to_string(b.kind)}, {"lambda", b.lambda}, {"models", models}});
  }
  json clients = json::array();
  for (const auto& list : rec.client_models) {
    json models = json::array();
    for (const auto& p : list) models.push_back(params_json(p));
    clients.push_back(models);
  }
  write_json(dir / "models.json", {{"banks", banks}, {"client_models", clients}});

  write_json(dir / "final.json", {{"algorithm", rec.algorithm},
                                  {"seed", rec.seed},
                                  {"client_accuracy", rec.final_eval.client_accuracy},
                                  {"client_macro_f1", rec.final_eval.client_macro_f1},
                                  {"client_weight", rec.final_eval.client_weight},
                                  {"overall_accuracy", rec.final_eval.overall_accuracy},
                                  {"mean_macro_f1", rec.final_eval.mean_macro_f1},
                                  {"final_val_loss", rec.final_val_loss},
                                  {"level1_val_loss", rec.level1_val_loss},
                                  {"invariant_violations", rec.invariant_violations}});
  write_json(dir / "diagnostics.json", diagnostics_json(analyze_run(rec.rounds, rec.trace)));
}

RunRecord read_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("run directory not found: " + dir.string());
  RunRecord rec;
  rec.rounds = read_metrics_csv(dir / "metrics.csv");
  rec.structure = read_structure_csv(dir / "structure.csv");
  rec.mapping.rows = rec.structure.cells;
  rec.mapping_log = read_mapping_log_csv(dir / "mapping_log.csv");
  rec.trace = read_trace_csv(dir / "trace.csv");

  const json structure = read_json(dir / "structure.json");
  rec.level_add_rounds = json_get<std::vector<std::size_t>>(structure, "level_add_rounds", "structure.json");

  const std::string mctx = (dir / "models.json").string();
  const json models = read_json(dir / "models.json");
  for (const auto& b : json_get<json>(models, "banks", mctx)) {
    LevelBank bank;
    bank.level = json_get<std::size_t>(b, "level", mctx);
    bank.kind = parse_level_kind(json_get<std::string>(b, "kind", mctx));
    bank.lambda = json_get<double>(b, "lambda", mctx);
    for (const auto& p : json_get<json>(b, "models", mctx)) bank.models.push_back(params_from(p, mctx));
    rec.banks.push_back(std::move(bank));
  }
  for (const auto& list : json_get<json>(models, "client_models", mctx)) {
    std::vector<ParamVector> ps;
    for (const auto& p : list) ps.push_back(params_from(p, mctx));
    rec.client_models.push_back(std::move(ps));
  }

  const std::string fctx = (dir / "final.json").string();
  const json fin = read_json(dir / "final.json");
  rec.algorithm = json_get<std::string>(fin, "algorithm", fctx);
  rec.seed = json_get<std::uint64_t>(fin, "seed", fctx);
  rec.final_eval.client_accuracy = json_get<std::vector<double>>(fin, "client_accuracy", fctx);
  rec.final_eval.client_macro_f1 = json_get<std::vector<double>>(fin, "client_macro_f1", fctx);
  rec.final_eval.client_weight = json_get<std::vector<double>>(fin, "client_weight", fctx);
  rec.final_eval.overall_accuracy = json_get<double>(fin, "overall_accuracy", fctx);
  rec.final_eval.mean_macro_f1 = json_get<double>(fin, "mean_macro_f1", fctx);
  rec.final_val_loss = json_get<std::vector<double>>(fin, "final_val_loss", fctx);
  rec.level1_val_loss = json_get<std::vector<double>>(fin, "level1_val_loss", fctx);
  rec.invariant_violations = json_get<std::vector<std::string>>(fin, "invariant_violations", fctx);
  return rec;
}

}  // namespace femam
