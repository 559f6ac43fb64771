#include "biosent/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "biosent/error.hpp"

namespace biosent {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a == 0) throw Error(ErrorCode::ShapeError, "metrics need at least one sample");
  if (a != b) throw Error(ErrorCode::ShapeError, "labels and values differ in length");
}

void check_binary(const std::vector<int>& labels) {
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y == 0)
      neg = true;
    else if (y == 1)
      pos = true;
    else
      throw Error(ErrorCode::BadConfig, "score metrics need labels in {0, 1}");
  }
  if (!pos || !neg)
    throw Error(ErrorCode::DegenerateLabels, "score metrics need both classes present");
}

// indices sorted by descending score
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double balanced_accuracy(const std::vector<int>& labels, const std::vector<int>& predictions) {
  check_lengths(labels.size(), predictions.size());
  std::map<int, std::pair<std::int64_t, std::int64_t>> per_class;  // class -> (correct, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [correct, total] = per_class[labels[i]];
    ++total;
    if (predictions[i] == labels[i]) ++correct;
  }
  double sum = 0.0;
  for (const auto& [cls, counts] : per_class)
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return sum / static_cast<double>(per_class.size());
}

double auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels.size(), scores.size());
  check_binary(labels);

  // Mann-Whitney U from tie-averaged ranks of the positive scores
  auto order = descending_order(scores);
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double mean_rank = static_cast<double>(i + j) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mean_rank;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  std::int64_t n_pos = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] == 1) {
      pos_rank_sum += rank[t];
      ++n_pos;
    }
  }
  auto n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;
  // ranks are descending, so convert to "positives outrank negatives"
  double u = static_cast<double>(n_pos) * static_cast<double>(n_neg) +
             static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0 -
             pos_rank_sum;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_pr(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels.size(), scores.size());
  std::int64_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::BadConfig, "score metrics need labels in {0, 1}");
    n_pos += y;
  }
  if (n_pos == 0) throw Error(ErrorCode::DegenerateLabels, "average precision needs positives");

  auto order = descending_order(scores);
  double ap = 0.0, prev_recall = 0.0;
  std::int64_t tp = 0, taken = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;  // whole tie group enters at one threshold
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) {
      tp += labels[order[t]];
      ++taken;
    }
    double precision = static_cast<double>(tp) / static_cast<double>(taken);
    double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

double cohen_kappa(const std::vector<int>& labels, const std::vector<int>& predictions) {
  check_lengths(labels.size(), predictions.size());
  auto n = static_cast<double>(labels.size());
  std::map<int, std::int64_t> label_marginal, pred_marginal;
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++label_marginal[labels[i]];
    ++pred_marginal[predictions[i]];
    if (labels[i] == predictions[i]) ++agree;
  }
  double p_o = static_cast<double>(agree) / n;
  double p_e = 0.0;
  for (const auto& [cls, count] : label_marginal) {
    auto it = pred_marginal.find(cls);
    if (it != pred_marginal.end())
      p_e += (static_cast<double>(count) / n) * (static_cast<double>(it->second) / n);
  }
  double denom = 1.0 - p_e;
  if (denom < 1e-12) return 0.0;
  return (p_o - p_e) / denom;
}

double weighted_f1(const std::vector<int>& labels, const std::vector<int>& predictions) {
  check_lengths(labels.size(), predictions.size());
  std::map<int, std::int64_t> true_count, pred_count, tp_count;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++true_count[labels[i]];
    ++pred_count[predictions[i]];
    if (labels[i] == predictions[i]) ++tp_count[labels[i]];
  }
  double total = static_cast<double>(labels.size());
  double sum = 0.0;
  for (const auto& [cls, n_true] : true_count) {
    auto tp = static_cast<double>(tp_count.count(cls) ? tp_count[cls] : 0);
    auto n_pred = static_cast<double>(pred_count.count(cls) ? pred_count[cls] : 0);
    double f1 = 0.0;
    if (tp > 0.0) {  // otherwise precision or recall is 0 (or undefined) -> F1 = 0
      double precision = tp / n_pred;
      double recall = tp / static_cast<double>(n_true);
      f1 = 2.0 * precision * recall / (precision + recall);
    }
    sum += (static_cast<double>(n_true) / total) * f1;
  }
  return sum;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["n_samples"] = n_samples;
  j["n_classes"] = n_classes;
  j["metrics"] = values;
  return j.dump(2);
}

std::string EvalReport::csv_header() const {
  std::ostringstream out;
  out << "n_samples,n_classes";
  for (const auto& [name, value] : values) out << ',' << name;
  return out.str();
}

std::string EvalReport::csv_row() const {
  std::ostringstream out;
  out << n_samples << ',' << n_classes;
  out.precision(17);
  for (const auto& [name, value] : values) out << ',' << value;
  return out.str();
}

}  // namespace biosent
