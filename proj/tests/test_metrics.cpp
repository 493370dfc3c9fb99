#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "retssl/eval/metrics.hpp"
#include "retssl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace retssl;
using eval::MetricError;

namespace {

// Quadratic pairwise oracle: P(score_pos > score_neg) + 0.5 P(tie).
double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  long pairs = 0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      ++pairs;
    }
  return wins / pairs;
}

// Threshold sweep oracle: walk distinct scores descending, rescanning the
// full arrays for each confusion count.
double auprc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<double>> thresholds(s.begin(), s.end());
  long n_pos = std::count(y.begin(), y.end(), 1);
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] == 1 ? tp : fp)++;
    const double recall = static_cast<double>(tp) / n_pos;
    ap += (recall - prev_recall) * (tp / static_cast<double>(tp + fp));
    prev_recall = recall;
  }
  return ap;
}

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

Sample random_sample(uint64_t seed, size_t n, bool quantize) {
  Rng rng(seed);
  Sample out;
  for (size_t i = 0; i < n; ++i) {
    double s = rng.uniform();
    if (quantize) s = std::floor(s * 8) / 8;  // force tie groups
    out.scores.push_back(s);
    out.labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  // guarantee both classes
  out.labels[0] = 1;
  out.labels[1] = 0;
  return out;
}

}  // namespace

TEST_CASE("ranking metric matches the pairwise oracle, ties included") {
  for (uint64_t seed : {1u, 2u, 3u, 4u}) {
    for (bool quantize : {false, true}) {
      const auto sm = random_sample(seed, 150, quantize);
      CHECK(std::abs(eval::auroc(sm.scores, sm.labels) -
                     auroc_oracle(sm.scores, sm.labels)) <= 1e-9);
    }
  }
}

TEST_CASE("precision-recall area matches the threshold-sweep oracle") {
  for (uint64_t seed : {5u, 6u, 7u, 8u}) {
    for (bool quantize : {false, true}) {
      const auto sm = random_sample(seed, 120, quantize);
      CHECK(std::abs(eval::auprc(sm.scores, sm.labels) -
                     auprc_oracle(sm.scores, sm.labels)) <= 1e-9);
    }
  }
}

TEST_CASE("pinned small cases") {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  CHECK(eval::auroc(s, {1, 1, 0, 0}) == 1.0);
  CHECK(eval::auprc(s, {1, 1, 0, 0}) == 1.0);
  CHECK(eval::auroc(s, {0, 0, 1, 1}) == 0.0);
  CHECK(eval::auroc(s, {0, 1, 0, 1}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(eval::auprc(s, {0, 1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("all-equal scores give chance level and prevalence") {
  const std::vector<double> flat(10, 0.42);
  const std::vector<int> y{1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  CHECK(eval::auroc(flat, y) == 0.5);
  CHECK(eval::auprc(flat, y) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("invariance under strictly increasing transforms") {
  const auto sm = random_sample(11, 100, false);
  const double base_roc = eval::auroc(sm.scores, sm.labels);
  const double base_pr = eval::auprc(sm.scores, sm.labels);
  std::vector<double> affine, expd;
  for (double v : sm.scores) {
    affine.push_back(2.0 * v + 3.0);
    expd.push_back(std::exp(v));
  }
  CHECK(eval::auroc(affine, sm.labels) == base_roc);
  CHECK(eval::auroc(expd, sm.labels) == base_roc);
  CHECK(eval::auprc(affine, sm.labels) == base_pr);
  CHECK(eval::auprc(expd, sm.labels) == base_pr);
}

TEST_CASE("negating tie-free scores complements the ranking metric") {
  Rng rng(13);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 101; ++i) {
    s.push_back(rng.normal());  // continuous draws, ties have measure zero
    y.push_back(i % 3 == 0 ? 1 : 0);
  }
  std::vector<double> neg;
  for (double v : s) neg.push_back(-v);
  CHECK(eval::auroc(s, y) + eval::auroc(neg, y) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("uninformative scores stay near chance across seeds") {
  for (uint64_t seed = 100; seed < 120; ++seed) {
    Rng rng(seed);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      s.push_back(rng.uniform());
      y.push_back(i < 100 ? 1 : 0);
    }
    rng.shuffle(y.begin(), y.end());
    const double a = eval::auroc(s, y);
    CHECK(a >= 0.35);
    CHECK(a <= 0.65);
  }
}

TEST_CASE("degenerate inputs are refused") {
  CHECK_THROWS_AS(eval::auroc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(eval::auroc({0.1, 0.2}, {0, 0}), MetricError);
  CHECK_THROWS_AS(eval::auprc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(eval::auroc({0.1}, {1, 0}), MetricError);
  CHECK_THROWS_AS(eval::auroc({}, {}), MetricError);
  CHECK_THROWS_AS(eval::auroc({0.1, 0.2}, {1, 2}), MetricError);
}
