#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "trlab/data.hpp"

namespace trlab {

double auc_roc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc_roc: scores and labels differ in length");
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw InvalidArgument("auc_roc: non-finite score");
    if (labels[i] == 1.0)
      ++pos;
    else if (labels[i] != 0.0)
      throw InvalidArgument("auc_roc: labels must be 0 or 1");
  }
  const std::uint64_t n = scores.size(), neg = n - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("auc_roc: both label values must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled average ranks keep everything in exact integers:
  // a tie block occupying ranks i+1..j has doubled rank i+1+j.
  std::uint64_t rank2_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t block_pos = 0;
    for (std::size_t k = i; k < j; ++k) block_pos += labels[order[k]] == 1.0;
    rank2_pos += block_pos * (i + 1 + j);
    i = j;
  }
  const std::uint64_t u2 = rank2_pos - pos * (pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<std::optional<double>> per_class_auc(const TensorD& scores, const TensorF& labels) {
  if (scores.rank() != 2 || labels.rank() != 2 || scores.shape() != labels.shape())
    throw ShapeError("per_class_auc: scores " + shape_str(scores.shape()) + " vs labels " +
                     shape_str(labels.shape()));
  const std::size_t n = scores.dim(0), C = scores.dim(1);
  std::vector<std::optional<double>> out(C);
  std::vector<double> s(n), y(n);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores[i * C + c];
      y[i] = labels[i * C + c];
      pos += y[i] == 1.0;
    }
    if (pos == 0 || pos == n) continue;
    out[c] = auc_roc(s, y);
  }
  return out;
}

std::optional<double> mean_auc(const std::vector<std::optional<double>>& aucs) {
  double sum = 0;
  std::size_t k = 0;
  for (const auto& a : aucs)
    if (a) {
      sum += *a;
      ++k;
    }
  if (k == 0) return std::nullopt;
  return sum / static_cast<double>(k);
}

}  // namespace trlab
