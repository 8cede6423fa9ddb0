#pragma once

// Binary detection metrics. Label 1 marks a generated image, 0 a real one;
// higher scores mean "more likely generated".

#include <vector>

namespace spai {

/// Mann-Whitney probability that a generated score beats a real score, ties
/// counted as one half. Throws UndefinedMetric unless both classes occur.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Mean of TPR and TNR, predicting "generated" when score >= threshold.
double balanced_accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

/// sum_k (R_k - R_{k-1}) P_k over distinct descending-score thresholds.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace spai
