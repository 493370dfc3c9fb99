#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>

namespace retssl::model {

// Encoder/decoder geometry. TINY exists so that tests and gradient checks
// run in seconds; the larger presets follow common ViT shapes.
struct ModelConfig {
  int image_size = 224;
  int patch_size = 16;
  int enc_dim = 128;
  int enc_heads = 4;
  int enc_depth = 4;
  int dec_dim = 128;
  int dec_heads = 4;
  int dec_depth = 2;
  int mlp_ratio = 4;
  bool use_meta_tokens = true;
  std::string preset = "tiny";

  static ModelConfig tiny() { return {}; }

  static ModelConfig vit_s() {
    ModelConfig c;
    c.enc_dim = 384;
    c.enc_heads = 6;
    c.enc_depth = 12;
    c.dec_dim = 384;
    c.dec_heads = 6;
    c.dec_depth = 8;
    c.preset = "vit_s";
    return c;
  }

  static ModelConfig vit_b() {
    ModelConfig c;
    c.enc_dim = 768;
    c.enc_heads = 12;
    c.enc_depth = 12;
    c.dec_dim = 384;
    c.dec_heads = 6;
    c.dec_depth = 8;
    c.preset = "vit_b";
    return c;
  }

  static ModelConfig from_preset(const std::string& name);

  int grid() const { return image_size / patch_size; }
  int n_patches() const { return grid() * grid(); }
  int patch_values() const { return patch_size * patch_size * 3; }
  int n_special() const { return use_meta_tokens ? 3 : 1; }

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace retssl::model
