#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "retssl/losses.hpp"
#include "retssl/rng.hpp"

using namespace retssl;
using nn::Mat;
using nn::Tape;

namespace {

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = scale * (rng.uniform() * 2.0 - 1.0);
  return m;
}

// Orthonormal matrix via Gram-Schmidt on a random square matrix.
Mat<double> random_rotation(int n, uint64_t seed) {
  Mat<double> a = random_mat(n, n, seed);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) a.row(i) -= a.row(i).dot(a.row(j)) * a.row(j);
    a.row(i).normalize();
  }
  return a;
}

}  // namespace

TEST_CASE("loss weights: pinned defaults, validation, json round-trip") {
  const LossWeights w;
  CHECK(w.lambda_recon == 1.4);
  CHECK(w.lambda_consis == 0.4);
  CHECK(w.lambda_meta == 0.2);
  CHECK(w.recon_pixel_weight == 1.0);
  CHECK(w.recon_perceptual_weight == 0.4);
  CHECK_NOTHROW(w.validate());
  LossWeights bad = w;
  bad.lambda_meta = -0.1;
  CHECK_THROWS(bad.validate());

  nlohmann::json j = w;
  const auto back = j.get<LossWeights>();
  CHECK(back.lambda_recon == w.lambda_recon);
  CHECK(back.recon_perceptual_weight == w.recon_perceptual_weight);
}

TEST_CASE("total loss formula: pinned arithmetic and linearity") {
  const LossWeights w;
  CHECK(std::abs(LossReport::combine(w, 1, 1, 1, 1, 1) - 2.76) <= 1e-9);

  LossWeights zero;
  zero.lambda_recon = zero.lambda_consis = zero.lambda_meta = 0;
  CHECK(LossReport::combine(zero, 1, 1, 1, 1, 1) == 0.0);

  LossWeights twice = w;
  twice.lambda_consis *= 2;
  const double base = LossReport::combine(w, 0.3, 0.7, 0.9, 0.2, 0.4);
  const double doubled = LossReport::combine(twice, 0.3, 0.7, 0.9, 0.2, 0.4);
  CHECK(doubled - base == doctest::Approx(0.4 * 0.9).epsilon(1e-12));

  // the report invariant: total is the weighted sum of the stored terms
  const double px = 0.11, perc = 0.22, cons = 0.33, rmse = 0.44, ce = 0.55;
  const double expect = 1.4 * (1.0 * px + 0.4 * perc) + 0.4 * cons + 0.2 * (rmse + ce);
  CHECK(LossReport::combine(w, px, perc, cons, rmse, ce) ==
        doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("loss report names its first non-finite term") {
  LossReport r;
  CHECK_FALSE(r.first_non_finite().has_value());
  r.recon_perceptual = std::nan("");
  REQUIRE(r.first_non_finite().has_value());
  CHECK(*r.first_non_finite() == "recon_perceptual");
  r.recon_pixel = std::numeric_limits<double>::infinity();
  CHECK(*r.first_non_finite() == "recon_pixel");
  const auto j = r.to_json();
  CHECK(j.contains("total"));
  CHECK(j.contains("meta_gender_ce"));
}

TEST_CASE("reconstruction pixel loss: zero, offset, and brute-force oracle") {
  const Mat<double> target = random_mat(9, 12, 1).cwiseAbs();
  const std::vector<int> qualifying{1, 4, 7};

  Tape<double> t;
  auto pred_eq = t.input(target);
  CHECK(t.val(recon_pixel_loss(t, pred_eq, target, qualifying))(0, 0) == 0.0);

  Mat<double> shifted = target.array() + 0.1;
  Tape<double> t2;
  CHECK(t2.val(recon_pixel_loss(t2, t2.input(shifted), target, qualifying))(0, 0) ==
        doctest::Approx(0.01).epsilon(1e-12));

  const Mat<double> pred = random_mat(9, 12, 2);
  Tape<double> t3;
  const double got = t3.val(recon_pixel_loss(t3, t3.input(pred), target, qualifying))(0, 0);
  double oracle = 0;
  for (int q : qualifying)
    for (int j = 0; j < 12; ++j) oracle += std::pow(pred(q, j) - target(q, j), 2);
  oracle /= 3 * 12;
  CHECK(got == doctest::Approx(oracle).epsilon(1e-12));

  Tape<double> t4;
  CHECK_THROWS(recon_pixel_loss(t4, t4.input(pred), target, {}));
}

TEST_CASE("reconstruction loss ignores non-qualifying patches") {
  const Mat<double> target = random_mat(9, 12, 3);
  auto pred = target;
  pred.row(0).array() += 100.0;  // not in the qualifying set
  Tape<double> t;
  CHECK(t.val(recon_pixel_loss(t, t.input(pred), target, {2, 5}))(0, 0) == 0.0);
}

TEST_CASE("perceptual loss: zero on identity, symmetric, deterministic in seed") {
  const int size = 32, patch = 16;
  const auto fx = FeatureExtractor<double>::create(77);
  const Mat<double> a = random_mat(4, patch * patch * 3, 10).cwiseAbs();
  const Mat<double> b = random_mat(4, patch * patch * 3, 11).cwiseAbs();
  const std::vector<int> all{0, 1, 2, 3};

  Tape<double> t0;
  CHECK(t0.val(perceptual_loss(t0, t0.input(a), a, all, fx, size, patch))(0, 0) ==
        doctest::Approx(0.0).scale(1.0));

  // with every patch masked the composition equals pred, so the loss is the
  // plain feature distance and must be symmetric in (pred, target)
  Tape<double> t1, t2;
  const double ab = t1.val(perceptual_loss(t1, t1.input(a), b, all, fx, size, patch))(0, 0);
  const double ba = t2.val(perceptual_loss(t2, t2.input(b), a, all, fx, size, patch))(0, 0);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab > 0.0);

  const auto fx_same = FeatureExtractor<double>::create(77);
  Tape<double> t3;
  CHECK(t3.val(perceptual_loss(t3, t3.input(a), b, all, fx_same, size, patch))(0, 0) == ab);
  const auto fx_other = FeatureExtractor<double>::create(78);
  Tape<double> t4;
  CHECK(t4.val(perceptual_loss(t4, t4.input(a), b, all, fx_other, size, patch))(0, 0) != ab);
}

TEST_CASE("perceptual composition only differs on masked slots") {
  // pred differs from target everywhere, but only patch 2 is masked: the
  // composed image equals the target except inside patch 2, so making pred
  // match the target there zeroes the loss.
  const int size = 32, patch = 16;
  const auto fx = FeatureExtractor<double>::create(5);
  const Mat<double> target = random_mat(4, patch * patch * 3, 12).cwiseAbs();
  Mat<double> pred = random_mat(4, patch * patch * 3, 13);
  pred.row(2) = target.row(2);
  Tape<double> t;
  CHECK(t.val(perceptual_loss(t, t.input(pred), target, {2}, fx, size, patch))(0, 0) ==
        doctest::Approx(0.0).scale(1.0));

  auto pred_off = pred;
  pred_off.row(2).array() += 0.5;
  Tape<double> t2;
  CHECK(t2.val(perceptual_loss(t2, t2.input(pred_off), target, {2}, fx, size, patch))(0, 0) >
        0.0);
}

TEST_CASE("perceptual gradient flows into predictions") {
  const int size = 32, patch = 16;
  const auto fx = FeatureExtractor<double>::create(6);
  const Mat<double> target = random_mat(4, patch * patch * 3, 14).cwiseAbs();
  const Mat<double> pred = random_mat(4, patch * patch * 3, 15);
  Tape<double> t;
  auto rp = t.input(pred);
  t.backward(perceptual_loss(t, rp, target, {0, 3}, fx, size, patch));
  const auto& g = t.grad(rp);
  CHECK(g.row(0).norm() > 0.0);
  CHECK(g.row(3).norm() > 0.0);
  // unmasked rows contribute nothing
  CHECK(g.row(1).norm() == 0.0);
  CHECK(g.row(2).norm() == 0.0);
}

TEST_CASE("consistency correspondence: identity or horizontal mirror") {
  const std::vector<int> vis{0, 5, 14 * 3 + 2, 195};
  CHECK(consistency_correspondence(vis, 14, false) == vis);
  const auto mirrored = consistency_correspondence(vis, 14, true);
  CHECK(mirrored[0] == 13);            // (0,0) -> (0,13)
  CHECK(mirrored[1] == 8);             // (0,5) -> (0,8)
  CHECK(mirrored[2] == 14 * 3 + 11);   // (3,2) -> (3,11)
  CHECK(mirrored[3] == 14 * 13 + 0);   // (13,13) -> (13,0)
  // mirroring twice is the identity
  CHECK(consistency_correspondence(mirrored, 14, true) == vis);
}

TEST_CASE("consistency: pinned values for identical, orthogonal, antipodal") {
  Tape<double> t;
  Mat<double> a(2, 4), b(2, 4);
  a << 1, 0, 0, 0, 0, 3, 0, 0;
  b = a;
  const auto same = consistency_sum(t, t.input(a), t.input(b), {0, 1});
  CHECK(same.count == 2);
  CHECK(t.val(same.sum)(0, 0) == doctest::Approx(0.0).scale(1.0));

  Mat<double> ortho(2, 4);
  ortho << 0, 2, 0, 0, 5, 0, 0, 0;
  Tape<double> t2;
  const auto o = consistency_sum(t2, t2.input(a), t2.input(ortho), {0, 1});
  CHECK(t2.val(o.sum)(0, 0) / o.count == doctest::Approx(1.0).epsilon(1e-12));

  Tape<double> t3;
  Mat<double> anti = -a;
  const auto n = consistency_sum(t3, t3.input(a), t3.input(anti), {0, 1});
  CHECK(t3.val(n.sum)(0, 0) / n.count == doctest::Approx(2.0).epsilon(1e-12));

  Tape<double> t4;
  CHECK_THROWS(consistency_sum(t4, t4.input(a), t4.input(b), {}));
}

TEST_CASE("consistency mean lies in [0,2] and uses the counterpart map") {
  const Mat<double> a = random_mat(6, 8, 20);
  const Mat<double> b = random_mat(10, 8, 21);
  const std::vector<int> counterpart{9, 0, 3, 3, 7, 1};
  Tape<double> t;
  const auto term = consistency_sum(t, t.input(a), t.input(b), counterpart);
  const double mean = t.val(term.sum)(0, 0) / term.count;
  CHECK(mean >= 0.0);
  CHECK(mean <= 2.0);
  double oracle = 0;
  for (int i = 0; i < 6; ++i) {
    const auto ra = a.row(i).normalized();
    const auto rb = b.row(counterpart[i]).normalized();
    oracle += 1.0 - ra.dot(rb);
  }
  CHECK(t.val(term.sum)(0, 0) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("consistency is invariant under a common orthogonal transform") {
  const Mat<double> a = random_mat(5, 8, 30);
  const Mat<double> b = random_mat(5, 8, 31);
  const Mat<double> q = random_rotation(8, 32);
  REQUIRE((q * q.transpose() - Mat<double>::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
  const std::vector<int> idx{0, 1, 2, 3, 4};

  Tape<double> t1, t2;
  const auto plain = consistency_sum(t1, t1.input(a), t1.input(b), idx);
  const auto rotated = consistency_sum(t2, t2.input(Mat<double>(a * q)),
                                       t2.input(Mat<double>(b * q)), idx);
  CHECK(t1.val(plain.sum)(0, 0) ==
        doctest::Approx(t2.val(rotated.sum)(0, 0)).epsilon(1e-6));
}

TEST_CASE("consistency gradient flows through both embedding sets") {
  const Mat<double> a = random_mat(3, 6, 40);
  const Mat<double> b = random_mat(4, 6, 41);
  Tape<double> t;
  auto ra = t.input(a), rb = t.input(b);
  const auto term = consistency_sum(t, ra, rb, {2, 0, 3});
  t.backward(term.sum);
  CHECK(t.grad(ra).norm() > 0.0);
  CHECK(t.grad(rb).norm() > 0.0);
  CHECK(t.grad(rb).row(1).norm() == 0.0);  // row 1 is never a counterpart
}

TEST_CASE("batch age RMSE assembled from per-view squared errors") {
  // predictions and labels for 4 views; the engine sums squared errors on
  // the tape and takes sqrt(mean) outside
  const std::vector<double> preds{0.3, 0.55, 0.7, 0.42};
  const std::vector<double> labels{0.25, 0.6, 0.66, 0.5};
  double sq_sum = 0;
  for (int i = 0; i < 4; ++i) {
    Tape<double> t;
    Mat<double> p(1, 1);
    p(0, 0) = preds[i];
    const auto se = age_squared_error(t, t.input(p), labels[i]);
    CHECK(t.val(se)(0, 0) ==
          doctest::Approx(std::pow(preds[i] - labels[i], 2)).epsilon(1e-12));
    sq_sum += t.val(se)(0, 0);
  }
  double oracle = 0;
  for (int i = 0; i < 4; ++i) oracle += std::pow(preds[i] - labels[i], 2);
  CHECK(std::sqrt(sq_sum / 4) == doctest::Approx(std::sqrt(oracle / 4)).epsilon(1e-12));

  // constant +0.1 offset gives rmse exactly 0.1
  double off_sum = 0;
  for (double label : {0.2, 0.5, 0.8}) {
    Tape<double> t;
    Mat<double> p(1, 1);
    p(0, 0) = label + 0.1;
    off_sum += t.val(age_squared_error(t, t.input(p), label))(0, 0);
  }
  CHECK(std::sqrt(off_sum / 3) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("gender cross entropy: uniform logits give ln 2") {
  Tape<double> t;
  Mat<double> logits = Mat<double>::Zero(2, 2);
  const double ce = t.val(t.cross_entropy_with_labels(t.input(logits), {0, 1}))(0, 0);
  CHECK(std::abs(ce - std::log(2.0)) <= 1e-9);

  // perfect prediction drives ce toward 0
  Mat<double> sharp(1, 2);
  sharp << 30.0, -30.0;
  Tape<double> t2;
  CHECK(t2.val(t2.cross_entropy_with_labels(t2.input(sharp), {0}))(0, 0) ==
        doctest::Approx(0.0).scale(1.0));
}
