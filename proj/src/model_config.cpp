#include "retssl/model/config.hpp"

#include <set>

namespace retssl::model {

ModelConfig ModelConfig::from_preset(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "vit_s") return vit_s();
  if (name == "vit_b") return vit_b();
  throw std::invalid_argument("unknown model preset: " + name);
}

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw std::invalid_argument("image_size must be a positive multiple of patch_size");
  if (enc_dim <= 0 || enc_heads <= 0 || enc_dim % enc_heads != 0)
    throw std::invalid_argument("encoder dim must be divisible by encoder heads");
  if (dec_dim <= 0 || dec_heads <= 0 || dec_dim % dec_heads != 0)
    throw std::invalid_argument("decoder dim must be divisible by decoder heads");
  if (enc_depth <= 0 || dec_depth <= 0) throw std::invalid_argument("depth must be positive");
  if (mlp_ratio < 1) throw std::invalid_argument("mlp_ratio must be >= 1");
  // sin/cos positional tables split each dimension in four.
  if (enc_dim % 4 != 0 || dec_dim % 4 != 0)
    throw std::invalid_argument("token dims must be divisible by 4");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},
                     {"patch_size", c.patch_size},
                     {"enc_dim", c.enc_dim},
                     {"enc_heads", c.enc_heads},
                     {"enc_depth", c.enc_depth},
                     {"dec_dim", c.dec_dim},
                     {"dec_heads", c.dec_heads},
                     {"dec_depth", c.dec_depth},
                     {"mlp_ratio", c.mlp_ratio},
                     {"use_meta_tokens", c.use_meta_tokens},
                     {"preset", c.preset}};
}

// Missing keys keep the preset (or default) value; unknown keys are rejected
// so config typos fail loudly instead of silently training the wrong model.
void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known{
      "image_size", "patch_size", "enc_dim",   "enc_heads",       "enc_depth", "dec_dim",
      "dec_heads",  "dec_depth",  "mlp_ratio", "use_meta_tokens", "preset"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown model config key: " + key);
  c = ModelConfig{};
  if (j.contains("preset")) c = ModelConfig::from_preset(j.at("preset").get<std::string>());
  if (j.contains("image_size")) j.at("image_size").get_to(c.image_size);
  if (j.contains("patch_size")) j.at("patch_size").get_to(c.patch_size);
  if (j.contains("enc_dim")) j.at("enc_dim").get_to(c.enc_dim);
  if (j.contains("enc_heads")) j.at("enc_heads").get_to(c.enc_heads);
  if (j.contains("enc_depth")) j.at("enc_depth").get_to(c.enc_depth);
  if (j.contains("dec_dim")) j.at("dec_dim").get_to(c.dec_dim);
  if (j.contains("dec_heads")) j.at("dec_heads").get_to(c.dec_heads);
  if (j.contains("dec_depth")) j.at("dec_depth").get_to(c.dec_depth);
  if (j.contains("mlp_ratio")) j.at("mlp_ratio").get_to(c.mlp_ratio);
  if (j.contains("use_meta_tokens")) j.at("use_meta_tokens").get_to(c.use_meta_tokens);
  c.validate();
}

}  // namespace retssl::model
