#include "femam/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "femam/error.hpp"

namespace femam {

DiagnosticConstants estimate_constants(std::span<const ClientRoundTrace> trace) {
  DiagnosticConstants c;
  for (const auto& t : trace) {
    c.U = std::max(c.U, t.max_minibatch_norm);
    c.B = std::max(c.B, t.b_ratio);
    c.sigma2 = std::max(c.sigma2, t.max_deviation_sq);
    c.beta = std::max(c.beta, t.max_secant);
  }
  return c;
}

void fill_dissimilarity(std::span<ClientRoundTrace> round_trace,
                        std::span<const ParamVector> start_grads) {
  if (round_trace.size() != start_grads.size()) throw Error("fill_dissimilarity: size mismatch");
  std::map<int, std::pair<ParamVector, double>> groups;
  for (std::size_t i = 0; i < round_trace.size(); ++i) {
    auto& [sum, weight] = groups[round_trace[i].group];
    if (sum.values.empty()) sum = ParamVector(start_grads[i].dim());
    for (std::size_t j = 0; j < sum.dim(); ++j) sum[j] += round_trace[i].weight * start_grads[i][j];
    weight += round_trace[i].weight;
  }
  for (auto& [_, g] : groups)
    for (double& v : g.first.values) v /= g.second;
  for (std::size_t i = 0; i < round_trace.size(); ++i) {
    const ParamVector& mean = groups[round_trace[i].group].first;
    const double denom = std::sqrt(squared_norm(mean));
    const double num = std::sqrt(squared_distance(mean, start_grads[i]));
    round_trace[i].b_ratio = denom > 0.0 ? num / denom : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
}

DiagnosticsReport analyze_run(std::span<const RoundMetrics> rounds,
                              std::span<const ClientRoundTrace> trace, double tolerance) {
  DiagnosticsReport out;
  out.constants = estimate_constants(trace);

  std::map<std::size_t, std::pair<double, bool>> per_round;  // round -> (min bound, violated)
  for (const auto& t : trace) {
    if (!std::isfinite(t.lr_bound)) continue;
    auto [it, inserted] = per_round.try_emplace(t.round, t.lr_bound, false);
    if (!inserted) it->second.first = std::min(it->second.first, t.lr_bound);
    if (t.lr_applied > t.lr_bound) it->second.second = true;
  }
  for (const auto& r : rounds) {
    if (r.kind != LevelKind::cluster) continue;
    out.rounds.push_back(r.round);
    auto it = per_round.find(r.round);
    const double bound = it != per_round.end() ? it->second.first : r.lr_bound_min;
    out.theorem1_bound.push_back(bound);
    const bool violated = it != per_round.end() ? it->second.second : r.lr_violation;
    if (violated) out.violation_rounds.push_back(r.round);
  }

  for (std::size_t k = 1; k < rounds.size(); ++k) {
    const auto& prev = rounds[k - 1];
    const auto& cur = rounds[k];
    if (cur.kind != LevelKind::cluster || prev.level != cur.level) continue;
    if (cur.F > prev.F + tolerance) {
      out.F_monotone = false;
      out.F_increase_rounds.push_back(cur.round);
    }
  }
  return out;
}

}  // namespace femam
