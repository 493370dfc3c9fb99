#pragma once

#include <vector>

#include "retssl/image.hpp"

namespace retssl {

// Patch-level eligibility grid derived from a retina mask. grid[r*G+c] is
// true when patch (r,c) overlaps retinal tissue enough to host visible
// tokens. Always contains at least one eligible patch.
struct EligibilityGrid {
  int grid_size = 0;             // G = image_size / patch_size
  float coverage_threshold = 0.5f;
  std::vector<std::uint8_t> grid;  // G*G entries in {0,1}

  bool eligible(int r, int c) const { return grid[static_cast<size_t>(r) * grid_size + c] != 0; }
  int count() const;
  std::vector<int> eligible_indices() const;
};

// Foreground threshold chosen by maximizing between-class variance over the
// exact sample values (no histogram binning, so a uniform brightness scale
// moves the threshold proportionally and selects the same pixel set).
float otsu_threshold(const std::vector<float>& values);

// Circular-foreground estimate: luminance threshold at
// max(0.06, 0.5 * otsu), largest connected component, morphological closing
// (disk radius 5), hole filling. Falls back to a centered inscribed circle of
// radius 0.47*W when the component covers under 20% of the frame.
Mask estimate_retina_mask(const Image& image);

// Fallback disc also used by the synthetic-data oracle tests.
Mask inscribed_circle_mask(int height, int width, double radius_fraction = 0.47);

// Patch (i,j) eligible iff mean mask coverage over its patch >= threshold.
// Zero qualifying patches forces the best-covered patch eligible.
EligibilityGrid patch_eligibility(const Mask& mask, int patch_size, float coverage_threshold = 0.5f);

}  // namespace retssl
