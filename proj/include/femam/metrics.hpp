#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace femam {

/// 100 * correct / total. Throws on empty or mismatched input.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Unweighted mean of per-class F1 over classes that occur in the labels or
/// the predictions. Classes absent from both are left out of the mean.
double macro_f1(std::span<const int> predictions, std::span<const int> labels,
                std::size_t num_classes);

struct EvalResult {
  std::vector<double> client_accuracy;  // percent
  std::vector<double> client_macro_f1;  // [0, 1]
  std::vector<double> client_weight;    // test samples per client
  double overall_accuracy = 0.0;        // sample-weighted mean of client_accuracy
  double mean_macro_f1 = 0.0;           // unweighted mean of client_macro_f1
};

/// Builds an EvalResult from per-client (predictions, labels) pairs.
EvalResult summarize(const std::vector<std::vector<int>>& predictions,
                     const std::vector<std::vector<int>>& labels, std::size_t num_classes);

/// Chance-corrected agreement between two clusterings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Population variance (divides by n).
double population_variance(std::span<const double> xs);

}  // namespace femam
