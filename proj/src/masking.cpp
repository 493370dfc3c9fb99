#include "retssl/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "retssl/rng.hpp"

namespace retssl {

MaskSchedule::MaskSchedule(double r0_, double rT_, int total_epochs_)
    : r0(r0_), rT(rT_), total_epochs(total_epochs_) {
  if (!(r0 > 0.0 && r0 < 1.0) || !(rT > 0.0 && rT < 1.0))
    throw std::invalid_argument("mask ratios must lie in (0,1)");
  if (total_epochs < 1) throw std::invalid_argument("schedule needs at least one epoch");
  increasing = rT > r0;
}

double masking_ratio(int epoch, const MaskSchedule& schedule) {
  if (epoch < 0 || epoch > schedule.total_epochs)
    throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(schedule.total_epochs) + "]");
  constexpr double kPi = 3.14159265358979323846;
  const double t = static_cast<double>(epoch) / schedule.total_epochs;
  return 0.5 * (1.0 - std::cos(kPi * t)) * (schedule.rT - schedule.r0) + schedule.r0;
}

MaskPlan sample_mask(const EligibilityGrid& eligible, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("masking ratio must lie in (0,1)");
  std::vector<int> pool = eligible.eligible_indices();
  if (pool.empty()) throw std::invalid_argument("sample_mask: no eligible patches");

  const long n_eligible = static_cast<long>(pool.size());
  const long want = std::lround((1.0 - ratio) * static_cast<double>(n_eligible));
  const long n_visible = std::max<long>(1, std::min<long>(want, n_eligible));

  // Partial Fisher-Yates: the first n_visible slots are a uniform draw
  // without replacement.
  Rng rng(derive_seed({seed, static_cast<std::uint64_t>(RngStream::kMaskPlan)}));
  for (long i = 0; i < n_visible; ++i) {
    const long j = i + rng.uniform_int(static_cast<int>(n_eligible - i));
    std::swap(pool[i], pool[j]);
  }

  MaskPlan plan;
  plan.eligible = eligible;
  plan.ratio_used = ratio;
  plan.visible_indices.assign(pool.begin(), pool.begin() + n_visible);
  std::sort(plan.visible_indices.begin(), plan.visible_indices.end());

  const int total = plan.grid_patches();
  std::vector<std::uint8_t> is_visible(total, 0);
  for (int idx : plan.visible_indices) is_visible[idx] = 1;
  plan.masked_indices.reserve(total - n_visible);
  for (int i = 0; i < total; ++i)
    if (!is_visible[i]) plan.masked_indices.push_back(i);
  return plan;
}

TokenLayout mask_token_layout(const MaskPlan& plan) {
  TokenLayout layout;
  layout.patch_of_token = plan.visible_indices;
  layout.token_of_patch.assign(plan.grid_patches(), -1);
  for (int t = 0; t < static_cast<int>(plan.visible_indices.size()); ++t)
    layout.token_of_patch[plan.visible_indices[t]] = t;
  return layout;
}

}  // namespace retssl
