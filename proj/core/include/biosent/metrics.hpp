#pragma once
#include <cstddef>
#include <map>
#include <string>
#include <vector>

// Classification metrics over integer labels plus an EvalReport container
// that serializes to JSON and CSV. Score-based metrics take one real score
// per sample (higher = more positive) and binary labels in {0, 1}.

namespace biosent {

// Mean per-class recall over the classes present in `labels`.
double balanced_accuracy(const std::vector<int>& labels, const std::vector<int>& predictions);

// Probability that a random positive outscores a random negative, ties at 1/2.
double auroc(const std::vector<int>& labels, const std::vector<double>& scores);

// Step-wise average precision: sum of (R_k - R_{k-1}) * P_k over descending
// score thresholds, tie groups processed together.
double auc_pr(const std::vector<int>& labels, const std::vector<double>& scores);

// (p_o - p_e) / (1 - p_e); 0 by convention when p_e reaches 1.
double cohen_kappa(const std::vector<int>& labels, const std::vector<int>& predictions);

// Per-class F1 averaged with true-count weights; a class with no true and no
// predicted positives contributes 0.
double weighted_f1(const std::vector<int>& labels, const std::vector<int>& predictions);

struct EvalReport {
  std::map<std::string, double> values;  // metric name -> value
  std::size_t n_samples = 0;
  int n_classes = 0;

  std::string to_json() const;
  // Columns: n_samples, n_classes, then metric names in map order.
  std::string csv_header() const;
  std::string csv_row() const;
};

}  // namespace biosent
