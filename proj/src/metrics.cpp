#include "femam/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "femam/error.hpp"

namespace femam {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty())
    throw Error("accuracy: predictions and labels must be nonempty and equally long");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double macro_f1(std::span<const int> predictions, std::span<const int> labels,
                std::size_t num_classes) {
  if (predictions.size() != labels.size() || labels.empty())
    throw Error("macro_f1: predictions and labels must be nonempty and equally long");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto p = static_cast<std::size_t>(predictions[i]);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (p >= num_classes || y >= num_classes) throw Error("macro_f1: class id out of range");
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    ++present;
  }
  return sum / static_cast<double>(present);
}

EvalResult summarize(const std::vector<std::vector<int>>& predictions,
                     const std::vector<std::vector<int>>& labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw Error("summarize: client count mismatch");
  EvalResult out;
  double weighted = 0.0;
  double total = 0.0;
  double f1 = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double acc = accuracy(predictions[i], labels[i]);
    const double f = macro_f1(predictions[i], labels[i], num_classes);
    const auto w = static_cast<double>(labels[i].size());
    out.client_accuracy.push_back(acc);
    out.client_macro_f1.push_back(f);
    out.client_weight.push_back(w);
    weighted += w * acc;
    total += w;
    f1 += f;
  }
  if (total > 0.0) {
    out.overall_accuracy = weighted / total;
    out.mean_macro_f1 = f1 / static_cast<double>(labels.size());
  }
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("adjusted_rand_index: sizes differ");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, v] : joint) index += choose2(v);
  for (const auto& [_, v] : ca) sa += choose2(v);
  for (const auto& [_, v] : cb) sb += choose2(v);
  const double expected = sa * sb / choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return index == expected ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

double population_variance(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size());
}

}  // namespace femam
