#pragma once

#include <cstdint>
#include <vector>

#include "retssl/retina_mask.hpp"

namespace retssl {

// Cosine-decay masking-ratio schedule over training epochs.
struct MaskSchedule {
  double r0 = 0.985;
  double rT = 0.85;
  int total_epochs = 300;
  // An increasing schedule (rT > r0) is accepted but flagged.
  bool increasing = false;

  MaskSchedule() = default;
  MaskSchedule(double r0_, double rT_, int total_epochs_);
};

// r_t = 0.5 * (1 - cos(pi*t/T)) * (rT - r0) + r0. t in [0, T].
double masking_ratio(int epoch, const MaskSchedule& schedule);

// Per-view visible/masked split for one training step. Indices are
// row-major patch positions, both lists sorted ascending, and together they
// cover the full grid. Background patches are always masked.
struct MaskPlan {
  EligibilityGrid eligible;
  std::vector<int> visible_indices;
  std::vector<int> masked_indices;
  double ratio_used = 0.0;

  int grid_patches() const { return eligible.grid_size * eligible.grid_size; }
};

// Draws the visible set uniformly without replacement from eligible patches,
// size max(1, round((1-ratio) * |eligible|)).
MaskPlan sample_mask(const EligibilityGrid& eligible, double ratio, std::uint64_t seed);

// Gather/scatter maps between the full patch grid and the visible-only token
// sequence an encoder consumes. token_of_patch is -1 at masked positions.
struct TokenLayout {
  std::vector<int> patch_of_token;  // |visible| entries, ascending patch index
  std::vector<int> token_of_patch;  // grid-size entries, -1 where masked
};

TokenLayout mask_token_layout(const MaskPlan& plan);

}  // namespace retssl
