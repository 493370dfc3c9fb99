#include "retssl/retina_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace retssl {

int EligibilityGrid::count() const {
  return static_cast<int>(std::count(grid.begin(), grid.end(), std::uint8_t{1}));
}

std::vector<int> EligibilityGrid::eligible_indices() const {
  std::vector<int> idx;
  idx.reserve(grid.size());
  for (int i = 0; i < static_cast<int>(grid.size()); ++i)
    if (grid[i]) idx.push_back(i);
  return idx;
}

float otsu_threshold(const std::vector<float>& values) {
  if (values.empty()) throw std::invalid_argument("otsu_threshold: empty input");
  std::vector<float> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  if (sorted.front() == sorted.back()) return sorted.front();

  std::vector<double> prefix(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];
  const double total = prefix[n];

  double best_score = -1.0;
  size_t best_cut = 0;  // background = sorted[0..cut), foreground = rest
  for (size_t cut = 1; cut < n; ++cut) {
    if (sorted[cut] == sorted[cut - 1]) continue;
    const double w0 = static_cast<double>(cut);
    const double w1 = static_cast<double>(n - cut);
    const double mu0 = prefix[cut] / w0;
    const double mu1 = (total - prefix[cut]) / w1;
    const double score = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (score > best_score) {
      best_score = score;
      best_cut = cut;
    }
  }
  return 0.5f * (sorted[best_cut - 1] + sorted[best_cut]);
}

namespace {

Mask largest_component(const Mask& fg) {
  const int h = fg.height, w = fg.width;
  std::vector<int> label(static_cast<size_t>(h) * w, -1);
  std::vector<int> stack;
  int best_label = -1;
  size_t best_size = 0;
  int next_label = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!fg.data[start] || label[start] >= 0) continue;
    size_t size = 0;
    stack.push_back(start);
    label[start] = next_label;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int y = p / w, x = p % w;
      const int nb[4] = {p - w, p + w, p - 1, p + 1};
      const bool ok[4] = {y > 0, y < h - 1, x > 0, x < w - 1};
      for (int k = 0; k < 4; ++k) {
        if (ok[k] && fg.data[nb[k]] && label[nb[k]] < 0) {
          label[nb[k]] = next_label;
          stack.push_back(nb[k]);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next_label;
    }
    ++next_label;
  }
  Mask out(h, w);
  if (best_label >= 0)
    for (size_t i = 0; i < label.size(); ++i) out.data[i] = label[i] == best_label ? 1 : 0;
  return out;
}

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> off;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) off.emplace_back(dy, dx);
  return off;
}

Mask dilate(const Mask& m, const std::vector<std::pair<int, int>>& off) {
  Mask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (auto [dy, dx] : off) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < m.height && xx >= 0 && xx < m.width) out.at(yy, xx) = 1;
      }
    }
  return out;
}

Mask erode(const Mask& m, const std::vector<std::pair<int, int>>& off) {
  Mask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool all = true;
      for (auto [dy, dx] : off) {
        const int yy = y + dy, xx = x + dx;
        // Out-of-frame neighbors count as background so the close cannot
        // glue the mask to the border.
        if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width || !m.at(yy, xx)) {
          all = false;
          break;
        }
      }
      out.at(y, x) = all ? 1 : 0;
    }
  return out;
}

Mask fill_holes(const Mask& m) {
  const int h = m.height, w = m.width;
  // Flood the background from the border; anything unreachable is a hole.
  std::vector<std::uint8_t> outside(static_cast<size_t>(h) * w, 0);
  std::vector<int> stack;
  auto push = [&](int y, int x) {
    const int p = y * w + x;
    if (!m.data[p] && !outside[p]) {
      outside[p] = 1;
      stack.push_back(p);
    }
  };
  for (int x = 0; x < w; ++x) {
    push(0, x);
    push(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    push(y, 0);
    push(y, w - 1);
  }
  while (!stack.empty()) {
    const int p = stack.back();
    stack.pop_back();
    const int y = p / w, x = p % w;
    if (y > 0) push(y - 1, x);
    if (y < h - 1) push(y + 1, x);
    if (x > 0) push(y, x - 1);
    if (x < w - 1) push(y, x + 1);
  }
  Mask out(h, w);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = outside[i] ? 0 : 1;
  return out;
}

}  // namespace

Mask inscribed_circle_mask(int height, int width, double radius_fraction) {
  Mask out(height, width);
  const double cy = 0.5 * (height - 1);
  const double cx = 0.5 * (width - 1);
  const double r2 = radius_fraction * width * radius_fraction * width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dy = y - cy, dx = x - cx;
      out.at(y, x) = (dy * dy + dx * dx <= r2) ? 1 : 0;
    }
  return out;
}

Mask estimate_retina_mask(const Image& image) {
  if (image.empty()) throw std::invalid_argument("estimate_retina_mask: empty image");
  const std::vector<float> lum = luminance(image);
  const float thresh = std::max(0.06f, 0.5f * otsu_threshold(lum));

  Mask fg(image.height, image.width);
  for (size_t i = 0; i < lum.size(); ++i) fg.data[i] = lum[i] > thresh ? 1 : 0;

  Mask comp = largest_component(fg);
  static const auto kDisk5 = disk_offsets(5);
  comp = erode(dilate(comp, kDisk5), kDisk5);
  comp = fill_holes(comp);

  const double coverage = static_cast<double>(comp.count()) / (image.height * image.width);
  if (coverage < 0.20) return inscribed_circle_mask(image.height, image.width, 0.47);
  return comp;
}

EligibilityGrid patch_eligibility(const Mask& mask, int patch_size, float coverage_threshold) {
  if (patch_size <= 0 || mask.height % patch_size != 0 || mask.width % patch_size != 0)
    throw std::invalid_argument("patch_eligibility: dimensions not divisible by patch size");
  if (mask.height != mask.width)
    throw std::invalid_argument("patch_eligibility: mask must be square");
  if (!(coverage_threshold > 0.f && coverage_threshold <= 1.f))
    throw std::invalid_argument("patch_eligibility: threshold must lie in (0,1]");

  const int g = mask.height / patch_size;
  EligibilityGrid out;
  out.grid_size = g;
  out.coverage_threshold = coverage_threshold;
  out.grid.assign(static_cast<size_t>(g) * g, 0);

  int best_patch = 0;
  long best_pixels = -1;
  const long denom = static_cast<long>(patch_size) * patch_size;
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) {
      long inside = 0;
      for (int y = r * patch_size; y < (r + 1) * patch_size; ++y)
        for (int x = c * patch_size; x < (c + 1) * patch_size; ++x) inside += mask.at(y, x);
      const int p = r * g + c;
      if (static_cast<double>(inside) / denom >= coverage_threshold) out.grid[p] = 1;
      if (inside > best_pixels) {
        best_pixels = inside;
        best_patch = p;
      }
    }
  if (out.count() == 0) out.grid[best_patch] = 1;
  return out;
}

}  // namespace retssl
