#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "femam/record.hpp"

namespace femam {

/// Empirical proxies for the constants the convergence bounds assume.
struct DiagnosticConstants {
  double U = 0.0;       // largest observed mini-batch gradient norm
  double B = 0.0;       // largest within-group gradient dissimilarity ratio
  double beta = 0.0;    // largest observed gradient secant ratio
  double sigma2 = 0.0;  // largest observed ||g_minibatch - g_full||^2
};

DiagnosticConstants estimate_constants(std::span<const ClientRoundTrace> trace);

/// Fills b_ratio for a set of clients that trained against the same model
/// index mapping, from their start-of-round gradients and weights.
void fill_dissimilarity(std::span<ClientRoundTrace> round_trace,
                        std::span<const ParamVector> start_grads);

struct DiagnosticsReport {
  DiagnosticConstants constants;
  std::vector<std::size_t> rounds;          // rounds on cluster levels
  std::vector<double> theorem1_bound;       // per listed round: smallest client bound
  std::vector<std::size_t> violation_rounds;
  bool F_monotone = true;
  std::vector<std::size_t> F_increase_rounds;
};

/// Scans a run: constants from the trace, bound violations, and whether F
/// was non-increasing (within `tolerance`) across consecutive rounds of each
/// cluster level, starting from that level's second round.
DiagnosticsReport analyze_run(std::span<const RoundMetrics> rounds,
                              std::span<const ClientRoundTrace> trace, double tolerance = 1e-9);

}  // namespace femam
