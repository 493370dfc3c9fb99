#include "retssl/losses.hpp"

#include <set>

namespace retssl {

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lambda_recon", w.lambda_recon},
                     {"lambda_consis", w.lambda_consis},
                     {"lambda_meta", w.lambda_meta},
                     {"recon_pixel_weight", w.recon_pixel_weight},
                     {"recon_perceptual_weight", w.recon_perceptual_weight}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  static const std::set<std::string> known{"lambda_recon", "lambda_consis", "lambda_meta",
                                           "recon_pixel_weight", "recon_perceptual_weight"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown loss weight key: " + key);
  w = LossWeights{};
  if (j.contains("lambda_recon")) j.at("lambda_recon").get_to(w.lambda_recon);
  if (j.contains("lambda_consis")) j.at("lambda_consis").get_to(w.lambda_consis);
  if (j.contains("lambda_meta")) j.at("lambda_meta").get_to(w.lambda_meta);
  if (j.contains("recon_pixel_weight")) j.at("recon_pixel_weight").get_to(w.recon_pixel_weight);
  if (j.contains("recon_perceptual_weight"))
    j.at("recon_perceptual_weight").get_to(w.recon_perceptual_weight);
  w.validate();
}

std::optional<std::string> LossReport::first_non_finite() const {
  const std::pair<const char*, double> terms[] = {
      {"recon_pixel", recon_pixel},   {"recon_perceptual", recon_perceptual},
      {"consistency", consistency},   {"meta_age_rmse", meta_age_rmse},
      {"meta_gender_ce", meta_gender_ce}, {"total", total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) return std::string(name);
  return std::nullopt;
}

nlohmann::json LossReport::to_json() const {
  return nlohmann::json{{"recon_pixel", recon_pixel},
                        {"recon_perceptual", recon_perceptual},
                        {"consistency", consistency},
                        {"meta_age_rmse", meta_age_rmse},
                        {"meta_gender_ce", meta_gender_ce},
                        {"total", total},
                        {"masked_retinal_patches", masked_retinal_patches},
                        {"consistency_pairs", consistency_pairs}};
}

}  // namespace retssl
