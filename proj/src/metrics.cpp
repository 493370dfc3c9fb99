#include "retssl/eval/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace retssl::eval {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw MetricError("scores and labels must have equal length");
  if (scores.empty()) throw MetricError("empty input");
  long pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw MetricError("labels must be 0 or 1");
    pos += y;
  }
  if (pos == 0 || pos == static_cast<long>(labels.size()))
    throw MetricError("both classes must be present");
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups (1-based)
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum_pos = 0;
  long n_pos = 0;
  for (size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      rank_sum_pos += rank[k];
      ++n_pos;
    }
  const long n_neg = static_cast<long>(n) - n_pos;
  const double u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  long total_pos = 0;
  for (int y : labels) total_pos += y;

  double area = 0;
  double prev_recall = 0;
  long tp = 0, seen = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    long group_tp = labels[order[i]];
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
      ++j;
      group_tp += labels[order[j]];
    }
    tp += group_tp;
    seen += static_cast<long>(j - i + 1);
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision = static_cast<double>(tp) / seen;
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

}  // namespace retssl::eval
