#include "femam/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "femam/error.hpp"
#include "femam/io.hpp"
#include "femam/metrics.hpp"

namespace femam {

namespace fs = std::filesystem;

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  return {mean, std::sqrt(population_variance(xs))};
}

namespace {

void write_curve(const fs::path& path, const RunRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "round,level,accuracy,macro_f1,val_loss,F,R,level_add\n";
  for (const auto& m : rec.rounds) {
    const bool add = std::find(rec.level_add_rounds.begin(), rec.level_add_rounds.end(), m.round) !=
                     rec.level_add_rounds.end();
    out << m.round << ',' << m.level << ',' << format_double(m.accuracy) << ',' << format_double(m.macro_f1) << ','
        << format_double(m.val_loss) << ',' << format_double(m.F) << ',' << format_double(m.R) << ','
        << (add ? 1 : 0) << '\n';
  }
}

// Accuracy curve with a dashed vertical line at every level addition.
void write_plot(const fs::path& path, const std::string& title, const RunRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const double W = 640, H = 360, left = 50, right = 15, top = 30, bottom = 40;
  const double pw = W - left - right, ph = H - top - bottom;
  const double n = std::max<double>(1.0, static_cast<double>(rec.rounds.size()) - 1.0);
  auto x_of = [&](double r) { return left + pw * r / n; };
  auto y_of = [&](double acc) { return top + ph * (1.0 - acc / 100.0); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << title << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 100; tick += 25)
    out << "<text x=\"" << left - 6 << "\" y=\"" << y_of(tick) + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << tick << "</text>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">round</text>\n";
  for (std::size_t idx = 0; idx < rec.rounds.size(); ++idx) {
    const std::size_t round = rec.rounds[idx].round;
    if (round == 0) continue;
    if (std::find(rec.level_add_rounds.begin(), rec.level_add_rounds.end(), round) == rec.level_add_rounds.end())
      continue;
    const double x = x_of(static_cast<double>(idx));
    out << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + ph
        << "\" stroke=\"#3366cc\" stroke-dasharray=\"4 3\"/>\n";
  }
  out << "<polyline fill=\"none\" stroke=\"#cc3333\" stroke-width=\"1.2\" points=\"";
  for (std::size_t idx = 0; idx < rec.rounds.size(); ++idx)
    out << format_double(x_of(static_cast<double>(idx))) << ',' << format_double(y_of(rec.rounds[idx].accuracy))
        << ' ';
  out << "\"/>\n</svg>\n";
}

}  // namespace

std::vector<SummaryRow> build_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  for (const auto& d : run_dirs)
    if (!fs::is_directory(d)) throw ConfigError("run directory not found: " + d.string());

  fs::create_directories(out_dir / "curves");
  fs::create_directories(out_dir / "plots");

  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> acc, f1, best;
  for (const auto& d : run_dirs) {
    const RunRecord rec = read_run(d);
    const std::string algo = read_json(d / "config.json").value("algorithm", rec.algorithm);
    if (!acc.count(algo)) order.push_back(algo);
    acc[algo].push_back(rec.final_eval.overall_accuracy);
    f1[algo].push_back(rec.final_eval.mean_macro_f1);
    double b = 0.0;
    for (const auto& m : rec.rounds) b = std::max(b, m.accuracy);
    best[algo].push_back(std::max(b, rec.final_eval.overall_accuracy));

    const std::string name = d.filename().string();
    write_curve(out_dir / "curves" / (name + ".csv"), rec);
    write_plot(out_dir / "plots" / (name + ".svg"), name, rec);
  }

  std::vector<SummaryRow> rows;
  std::ofstream out(out_dir / "summary.csv", std::ios::binary);
  if (!out) throw Error("cannot write " + (out_dir / "summary.csv").string());
  out << "algorithm,runs,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,best_accuracy_mean,"
         "best_accuracy_std\n";
  for (const auto& algo : order) {
    SummaryRow r;
    r.algorithm = algo;
    r.runs = acc[algo].size();
    std::tie(r.accuracy_mean, r.accuracy_std) = mean_std(acc[algo]);
    std::tie(r.macro_f1_mean, r.macro_f1_std) = mean_std(f1[algo]);
    std::tie(r.best_accuracy_mean, r.best_accuracy_std) = mean_std(best[algo]);
    out << algo << ',' << r.runs << ',' << format_double(r.accuracy_mean) << ',' << format_double(r.accuracy_std)
        << ',' << format_double(r.macro_f1_mean) << ',' << format_double(r.macro_f1_std) << ','
        << format_double(r.best_accuracy_mean) << ',' << format_double(r.best_accuracy_std) << '\n';
    rows.push_back(r);
  }
  return rows;
}

}  // namespace femam
