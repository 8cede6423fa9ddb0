#include "spai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spai/types.hpp"

namespace spai {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidInput("metric: scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidInput("metric: labels must be 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInput("metric: scores must be finite");
  }
}

std::pair<std::size_t, std::size_t> class_counts(const std::vector<int>& labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return {pos, labels.size() - pos};
}

std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) throw UndefinedMetric("auc: both classes are required");

  // Rank-sum form. Ranks are doubled so tied groups get integer mid-ranks and
  // the statistic stays exact.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  unsigned long long doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const unsigned long long doubled_mid = i + 1 + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_mid;
    }
    i = j;
  }
  const unsigned long long twice_u = doubled_rank_sum - static_cast<unsigned long long>(pos) * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double balanced_accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  check_inputs(scores, labels);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) throw UndefinedMetric("balanced_accuracy: both classes are required");
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1 && predicted) ++tp;
    if (labels[i] == 0 && !predicted) ++tn;
  }
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto [pos, neg] = class_counts(labels);
  (void)neg;
  if (pos == 0) throw UndefinedMetric("average_precision: no positive samples");
  const std::vector<std::size_t> order = descending_order(scores);
  double ap = 0.0, previous_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1 ? 1 : 0;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - previous_recall) * precision;
    previous_recall = recall;
    i = j;
  }
  return ap;
}

}  // namespace spai
