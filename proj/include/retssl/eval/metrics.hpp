#pragma once

#include <stdexcept>
#include <vector>

namespace retssl::eval {

struct MetricError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Rank-based Mann-Whitney statistic; tied scores contribute one half.
// Throws MetricError unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall step curve by descending-score sweep with
// tied scores grouped: sum over groups of (recall gain) * (precision at the
// group's prefix).
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace retssl::eval
