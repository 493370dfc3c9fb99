#include "retssl/pairing.hpp"

#include <cmath>

#include "retssl/rng.hpp"

namespace retssl {

std::vector<PairTemplate> enumerate_pairs(const PatientRecord& record, int patient_index) {
  const int n = static_cast<int>(record.images.size());
  std::vector<PairTemplate> out;
  out.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      out.push_back({patient_index, a, b, record.images[a].eye != record.images[b].eye});
  return out;
}

PairIndex build_pair_index(const std::vector<PatientRecord>& records) {
  PairIndex index;
  index.per_patient_counts.reserve(records.size());
  for (int p = 0; p < static_cast<int>(records.size()); ++p) {
    auto pairs = enumerate_pairs(records[p], p);
    index.per_patient_counts.push_back(static_cast<long>(pairs.size()));
    index.pairs.insert(index.pairs.end(), pairs.begin(), pairs.end());
  }
  return index;
}

PairSample assign_roles(const PatientRecord& record, const PairTemplate& tpl,
                        std::uint64_t seed, int epoch, long pair_index) {
  Rng rng(derive_seed({seed, static_cast<std::uint64_t>(RngStream::kRole),
                       static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(pair_index)}));
  const bool a_masked = rng.bernoulli(0.5);
  const FundusImage& a = record.images[tpl.image_a];
  const FundusImage& b = record.images[tpl.image_b];
  if (a_masked) return PairSample(b, a, record.labels);
  return PairSample(a, b, record.labels);
}

namespace {

FundusImage augment_one(FundusImage view, const AugmentConfig& cfg, std::uint64_t view_seed) {
  Rng rng(view_seed);
  const double area = rng.uniform(cfg.min_area_scale, cfg.max_area_scale);
  const bool flip = rng.bernoulli(cfg.flip_prob);
  const int full = view.pixels.height;
  int side = static_cast<int>(std::lround(full * std::sqrt(area)));
  side = std::clamp(side, 1, full);
  const int y0 = side < full ? rng.uniform_int(full - side + 1) : 0;
  const int x0 = side < full ? rng.uniform_int(full - side + 1) : 0;

  Image px = view.pixels;
  std::optional<Mask> mask = view.retina_mask;
  if (side < full) {
    px = resize_bilinear(crop(px, y0, x0, side, side), full, full);
    for (float& v : px.data) v = std::clamp(v, 0.f, 1.f);
    if (mask) mask = resize_nearest(crop(*mask, y0, x0, side, side), full, full);
  }
  Eye effective = view.effective_eye;
  if (flip) {
    px = hflip(px);
    if (mask) mask = hflip(*mask);
    effective = opposite(effective);
  }
  FundusImage out(view.patient_id, view.eye, view.scanner_id, std::move(px), std::move(mask));
  out.effective_eye = effective;
  return out;
}

}  // namespace

PairSample augment_views(PairSample pair, const AugmentConfig& cfg, std::uint64_t seed,
                         int epoch, long pair_index) {
  if (!cfg.enabled) return pair;
  auto view_seed = [&](int view_index) {
    return derive_seed({seed, static_cast<std::uint64_t>(RngStream::kAugment),
                        static_cast<std::uint64_t>(epoch),
                        static_cast<std::uint64_t>(pair_index),
                        static_cast<std::uint64_t>(view_index)});
  };
  PairSample out(augment_one(std::move(pair.view_visible), cfg, view_seed(0)),
                 augment_one(std::move(pair.view_masked), cfg, view_seed(1)), pair.labels);
  return out;
}

}  // namespace retssl
