#pragma once

#include "retssl/losses.hpp"
#include "retssl/model/vit.hpp"
#include "retssl/parallel.hpp"

#include <algorithm>
#include <memory>
#include <set>

namespace retssl::train {

// One prepared pair: both views augmented, patchified, and the mask plan
// drawn. Everything random happened upstream; from here on the computation
// is a pure function.
template <class S>
struct BatchItem {
  nn::Mat<S> visible_patches;  // full view, grid x patch_values
  nn::Mat<S> masked_patches;   // reconstruction target
  MaskPlan plan;
  bool mirrored = false;  // effective lateralities differ
  S age_norm = S(0);
  int gender = 0;
  std::vector<int> qualifying;  // masked AND eligible patch indices
};

template <class S>
BatchItem<S> make_batch_item(const PairSample& pair, const MaskPlan& plan, int patch_size) {
  BatchItem<S> item;
  item.visible_patches = model::patchify<S>(pair.view_visible.pixels, patch_size);
  item.masked_patches = model::patchify<S>(pair.view_masked.pixels, patch_size);
  item.plan = plan;
  item.mirrored = pair.view_visible.effective_eye != pair.view_masked.effective_eye;
  item.age_norm = static_cast<S>(pair.labels.age_normalized());
  item.gender = gender_class(pair.labels.gender);
  const int g = plan.eligible.grid_size;
  for (int p : plan.masked_indices)
    if (plan.eligible.eligible(p / g, p % g)) item.qualifying.push_back(p);
  return item;
}

template <class S>
struct BatchResult {
  LossReport report;
  std::vector<nn::Mat<S>> grads;  // by parameter index; empty unless requested
};

namespace detail {

template <class S>
struct PairGraph {
  std::unique_ptr<nn::Tape<S>> tape;
  model::TapeModel<S> tm;
  typename nn::Tape<S>::Ref recon_px;
  typename nn::Tape<S>::Ref perceptual;
  typename nn::Tape<S>::Ref consis_sum;
  long consis_count = 0;
  typename nn::Tape<S>::Ref age_sq_sum;  // over both views
  typename nn::Tape<S>::Ref ce_mean;     // mean over both views
};

template <class S>
PairGraph<S> forward_pair(const model::VitModel<S>& model, const FeatureExtractor<S>& fx,
                          const BatchItem<S>& item, bool want_grads) {
  PairGraph<S> pg;
  pg.tape = std::make_unique<nn::Tape<S>>();
  auto& t = *pg.tape;
  pg.tm = model::TapeModel<S>::bind(t, model, want_grads);
  const auto& cfg = model.cfg;

  auto enc_vis = model::encode(pg.tm, item.visible_patches, nullptr);
  auto enc_masked = model::encode(pg.tm, item.masked_patches, &item.plan);
  auto pred = model::decode_cross(pg.tm, enc_masked, enc_vis);

  pg.recon_px = recon_pixel_loss(t, pred, item.masked_patches, item.qualifying);
  pg.perceptual = perceptual_loss(t, pred, item.masked_patches, item.plan.masked_indices,
                                  fx, cfg.image_size, cfg.patch_size);

  auto counterpart = consistency_correspondence(item.plan.visible_indices, cfg.grid(),
                                                item.mirrored);
  auto consis = consistency_sum(t, enc_masked.patch_tokens, enc_vis.patch_tokens, counterpart);
  pg.consis_sum = consis.sum;
  pg.consis_count = consis.count;

  if (cfg.use_meta_tokens) {
    auto meta_vis = model::predict_meta(pg.tm, enc_vis);
    auto meta_masked = model::predict_meta(pg.tm, enc_masked);
    pg.age_sq_sum = t.add(age_squared_error(t, meta_vis.age, item.age_norm),
                          age_squared_error(t, meta_masked.age, item.age_norm));
    pg.ce_mean = t.cross_entropy_with_labels(
        t.concat_rows({meta_vis.gender_logits, meta_masked.gender_logits}),
        {item.gender, item.gender});
  }
  return pg;
}

}  // namespace detail

// Batch forward (and optionally backward). The batch couples pairs through
// the pooled consistency denominator and the batch-level age RMSE, so each
// pair's scalars are seeded with the analytically derived adjoints and every
// graph is swept independently; gradients reduce in pair order regardless of
// worker count.
template <class S>
BatchResult<S> compute_batch(const model::VitModel<S>& model, const FeatureExtractor<S>& fx,
                             const std::vector<BatchItem<S>>& items, const LossWeights& w,
                             bool want_grads, int workers = 1) {
  if (items.empty()) throw std::invalid_argument("compute_batch: empty batch");
  w.validate();
  const long b = static_cast<long>(items.size());
  const bool meta = model.cfg.use_meta_tokens;

  std::vector<detail::PairGraph<S>> graphs(items.size());
  parallel_for(b, workers, [&](long i) {
    graphs[i] = detail::forward_pair(model, fx, items[i], want_grads);
  });

  double px_sum = 0, perc_sum = 0, consis_sum = 0, age_sq_sum = 0, ce_sum = 0;
  long consis_n = 0, qualifying = 0;
  for (const auto& pg : graphs) {
    px_sum += static_cast<double>(pg.tape->val(pg.recon_px)(0, 0));
    perc_sum += static_cast<double>(pg.tape->val(pg.perceptual)(0, 0));
    consis_sum += static_cast<double>(pg.tape->val(pg.consis_sum)(0, 0));
    consis_n += pg.consis_count;
    if (meta) {
      age_sq_sum += static_cast<double>(pg.tape->val(pg.age_sq_sum)(0, 0));
      ce_sum += static_cast<double>(pg.tape->val(pg.ce_mean)(0, 0));
    }
  }
  for (size_t i = 0; i < items.size(); ++i)
    qualifying += static_cast<long>(items[i].qualifying.size());

  const long m = 2 * b;  // meta predictions per batch, two views per pair
  BatchResult<S> out;
  out.report.recon_pixel = px_sum / b;
  out.report.recon_perceptual = perc_sum / b;
  out.report.consistency = consis_sum / consis_n;
  out.report.meta_age_rmse = meta ? std::sqrt(age_sq_sum / m) : 0.0;
  out.report.meta_gender_ce = meta ? ce_sum / b : 0.0;
  out.report.masked_retinal_patches = qualifying;
  out.report.consistency_pairs = consis_n;
  out.report.total =
      LossReport::combine(w, out.report.recon_pixel, out.report.recon_perceptual,
                          out.report.consistency, out.report.meta_age_rmse,
                          out.report.meta_gender_ce);
  if (!want_grads) return out;

  const S px_adj = static_cast<S>(w.lambda_recon * w.recon_pixel_weight / b);
  const S perc_adj = static_cast<S>(w.lambda_recon * w.recon_perceptual_weight / b);
  const S consis_adj = static_cast<S>(w.lambda_consis / consis_n);
  const S ce_adj = static_cast<S>(w.lambda_meta / b);
  const S age_adj =
      meta && out.report.meta_age_rmse > 0
          ? static_cast<S>(w.lambda_meta / (2.0 * out.report.meta_age_rmse * m))
          : S(0);

  parallel_for(b, workers, [&](long i) {
    auto& pg = graphs[i];
    std::vector<std::pair<typename nn::Tape<S>::Ref, S>> seeds;
    if (px_adj != S(0)) seeds.push_back({pg.recon_px, px_adj});
    if (perc_adj != S(0)) seeds.push_back({pg.perceptual, perc_adj});
    if (consis_adj != S(0)) seeds.push_back({pg.consis_sum, consis_adj});
    if (meta && age_adj != S(0)) seeds.push_back({pg.age_sq_sum, age_adj});
    if (meta && ce_adj != S(0)) seeds.push_back({pg.ce_mean, ce_adj});
    pg.tape->backward_weighted(seeds);
  });

  out.grads.resize(model.params.count());
  for (size_t p = 0; p < model.params.count(); ++p) {
    const auto& v = model.params.entries[p].value;
    out.grads[p] = nn::Mat<S>::Zero(v.rows(), v.cols());
  }
  for (auto& pg : graphs) {
    for (size_t p = 0; p < model.params.count(); ++p)
      out.grads[p] += pg.tape->grad(pg.tm.refs[p]);
    pg.tape.reset();  // free this pair's graph before reducing the next
  }
  return out;
}

}  // namespace retssl::train
