#pragma once

#include <cstdint>
#include <vector>

#include "retssl/types.hpp"

namespace retssl {

// Unordered same-patient pair of image indices; which side gets masked is
// decided later by assign_roles so every pair plays both roles in
// expectation without doubling the epoch.
struct PairTemplate {
  int patient_index = 0;
  int image_a = 0;  // a < b in the record's stable image order
  int image_b = 0;
  bool cross_laterality = false;
};

// All C(n,2) combinations for one record; single-image patients yield none.
std::vector<PairTemplate> enumerate_pairs(const PatientRecord& record, int patient_index = 0);

struct PairIndex {
  std::vector<PairTemplate> pairs;
  std::vector<long> per_patient_counts;
  long total() const { return static_cast<long>(pairs.size()); }
};

PairIndex build_pair_index(const std::vector<PatientRecord>& records);

// Uniform masked/visible role draw, deterministic in (seed, epoch, pair index).
PairSample assign_roles(const PatientRecord& record, const PairTemplate& tpl,
                        std::uint64_t seed, int epoch, long pair_index);

struct AugmentConfig {
  bool enabled = true;
  double min_area_scale = 0.6;  // random-resized-crop area fraction
  double max_area_scale = 1.0;
  double flip_prob = 0.5;
};

// Independent crop/flip per view; a flip toggles the view's effective
// laterality so mirror correspondence downstream stays aligned. The view's
// retina mask, when present, rides through the same geometry.
PairSample augment_views(PairSample pair, const AugmentConfig& cfg, std::uint64_t seed,
                         int epoch, long pair_index);

}  // namespace retssl
