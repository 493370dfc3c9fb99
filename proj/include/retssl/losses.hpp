#pragma once

#include "retssl/masking.hpp"
#include "retssl/model/patchify.hpp"
#include "retssl/nn/tape.hpp"
#include "retssl/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace retssl {

struct LossWeights {
  double lambda_recon = 1.4;
  double lambda_consis = 0.4;
  double lambda_meta = 0.2;
  double recon_pixel_weight = 1.0;
  double recon_perceptual_weight = 0.4;

  void validate() const {
    if (lambda_recon < 0 || lambda_consis < 0 || lambda_meta < 0 ||
        recon_pixel_weight < 0 || recon_perceptual_weight < 0)
      throw std::invalid_argument("loss weights must be nonnegative");
  }
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// Per-step loss breakdown. `total` is always the exact weighted sum of the
// stored terms; `combine` is the single place that formula lives.
struct LossReport {
  double recon_pixel = 0;
  double recon_perceptual = 0;
  double consistency = 0;
  double meta_age_rmse = 0;
  double meta_gender_ce = 0;
  double total = 0;
  long masked_retinal_patches = 0;
  long consistency_pairs = 0;

  static double combine(const LossWeights& w, double px, double perc, double consis,
                        double rmse, double ce) {
    return w.lambda_recon * (w.recon_pixel_weight * px + w.recon_perceptual_weight * perc) +
           w.lambda_consis * consis + w.lambda_meta * (rmse + ce);
  }

  // Name of the first non-finite term, if any; used for the NaN abort path.
  std::optional<std::string> first_non_finite() const;

  nlohmann::json to_json() const;
};

// Frozen random strided conv pyramid (3 -> 16 -> 32 -> 64 channels, tanh
// between stages). Stands in for a pretrained feature extractor: weights are
// a pure function of the seed, never trained, never checkpointed.
template <class S>
struct FeatureExtractor {
  struct Stage {
    nn::Mat<S> weight;  // (9*cin) x cout
    nn::Mat<S> bias;    // 1 x cout
  };
  std::vector<Stage> stages;

  static FeatureExtractor create(std::uint64_t seed) {
    FeatureExtractor fx;
    const int chans[4] = {3, 16, 32, 64};
    for (int s = 0; s < 3; ++s) {
      const int cin = chans[s], cout = chans[s + 1];
      Rng rng(derive_seed({seed, RngStream::kPerceptual, static_cast<std::uint64_t>(s)}));
      Stage st;
      st.weight.resize(9 * cin, cout);
      const double std = std::sqrt(2.0 / (9.0 * cin));
      for (Eigen::Index i = 0; i < st.weight.size(); ++i)
        st.weight.data()[i] = static_cast<S>(rng.normal() * std);
      st.bias = nn::Mat<S>::Zero(1, cout);
      fx.stages.push_back(std::move(st));
    }
    return fx;
  }

  template <class T>
  FeatureExtractor<T> cast() const {
    FeatureExtractor<T> out;
    for (const auto& st : stages)
      out.stages.push_back({st.weight.template cast<T>(), st.bias.template cast<T>()});
    return out;
  }

  // Input: (h*w) x 3 pixel matrix on the tape. Returns one feature node per
  // stage.
  std::vector<typename nn::Tape<S>::Ref> features(nn::Tape<S>& tape,
                                                  typename nn::Tape<S>::Ref image,
                                                  int h, int w) const {
    std::vector<typename nn::Tape<S>::Ref> out;
    auto x = image;
    for (const auto& st : stages) {
      int oh = 0, ow = 0;
      x = tape.tanh_(tape.conv3x3_s2(x, h, w, st.weight, st.bias, oh, ow));
      out.push_back(x);
      h = oh;
      w = ow;
    }
    return out;
  }
};

// Mean squared error over pixels of the qualifying (masked AND
// retina-eligible) patches only.
template <class S>
typename nn::Tape<S>::Ref recon_pixel_loss(nn::Tape<S>& tape, typename nn::Tape<S>::Ref pred,
                                           const nn::Mat<S>& target,
                                           const std::vector<int>& qualifying) {
  if (qualifying.empty())
    throw std::invalid_argument("reconstruction loss: no masked retina-eligible patches");
  nn::Mat<S> target_rows(static_cast<Eigen::Index>(qualifying.size()), target.cols());
  for (size_t i = 0; i < qualifying.size(); ++i)
    target_rows.row(static_cast<Eigen::Index>(i)) = target.row(qualifying[i]);
  return tape.mse_vs_const(tape.gather_rows(pred, std::vector<int>(qualifying)), target_rows);
}

// Masked patch slots take predictions, visible slots keep ground truth, and
// the composition is compared to the original in extractor feature space
// (mean over stages).
template <class S>
typename nn::Tape<S>::Ref perceptual_loss(nn::Tape<S>& tape, typename nn::Tape<S>::Ref pred,
                                          const nn::Mat<S>& target,
                                          const std::vector<int>& masked_indices,
                                          const FeatureExtractor<S>& fx, int image_size,
                                          int patch_size) {
  auto composed_patches = tape.overlay_rows(
      target, tape.gather_rows(pred, std::vector<int>(masked_indices)),
      std::vector<int>(masked_indices));
  auto map = model::unpatchify_index_map(image_size, patch_size);
  auto composed = tape.permute_flat(composed_patches, map, image_size * image_size, 3);
  auto target_pixels =
      tape.permute_flat(tape.constant(target), map, image_size * image_size, 3);
  auto fa = fx.features(tape, composed, image_size, image_size);
  auto fb = fx.features(tape, target_pixels, image_size, image_size);
  typename nn::Tape<S>::Ref acc;
  for (size_t s = 0; s < fa.size(); ++s) {
    auto d = tape.mse(fa[s], fb[s]);
    acc = s == 0 ? d : tape.add(acc, d);
  }
  return tape.scale(acc, S(1) / static_cast<S>(fa.size()));
}

// Counterpart patch index for each visible patch of the masked view: the
// horizontal mirror column when the two views' effective lateralities
// differ, the same position otherwise.
inline std::vector<int> consistency_correspondence(const std::vector<int>& visible_indices,
                                                   int grid, bool mirrored) {
  std::vector<int> out;
  out.reserve(visible_indices.size());
  for (int p : visible_indices) {
    const int r = p / grid, c = p % grid;
    out.push_back(mirrored ? r * grid + (grid - 1 - c) : p);
  }
  return out;
}

template <class S>
struct ConsistencyTerm {
  typename nn::Tape<S>::Ref sum;  // sum of (1 - cosine) over pairs
  long count = 0;
};

// a: masked-view patch tokens (one row per visible patch); b: fully visible
// view's patch tokens (full grid). Rows are L2-normalized before the dot.
template <class S>
ConsistencyTerm<S> consistency_sum(nn::Tape<S>& tape, typename nn::Tape<S>::Ref a,
                                   typename nn::Tape<S>::Ref b,
                                   const std::vector<int>& counterpart) {
  if (counterpart.empty()) throw std::invalid_argument("consistency loss: no pairs");
  if (static_cast<Eigen::Index>(counterpart.size()) != tape.val(a).rows())
    throw std::invalid_argument("consistency loss: counterpart count mismatch");
  const S eps = static_cast<S>(1e-12);
  auto an = tape.l2_normalize_rows(a, eps);
  auto bn = tape.l2_normalize_rows(tape.gather_rows(b, std::vector<int>(counterpart)), eps);
  auto dots = tape.sum_all(tape.rowwise_sum(tape.mul(an, bn)));
  ConsistencyTerm<S> term;
  term.count = static_cast<long>(counterpart.size());
  term.sum = tape.affine(dots, S(-1), static_cast<S>(term.count));
  return term;
}

// Squared normalized-age error of one prediction; batch RMSE is assembled
// outside the tape from these summands.
template <class S>
typename nn::Tape<S>::Ref age_squared_error(nn::Tape<S>& tape,
                                            typename nn::Tape<S>::Ref age_pred, S age_norm) {
  auto d = tape.affine(age_pred, S(1), -age_norm);
  return tape.mul(d, d);
}

}  // namespace retssl
