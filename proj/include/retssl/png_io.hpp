#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "retssl/image.hpp"

namespace retssl {

// Decodes any libpng-readable file to 3-channel float RGB in [0,1].
Image read_png_rgb(const std::string& path);

// 8-bit RGB; values are clamped to [0,1] before quantization.
void write_png_rgb8(const std::string& path, const Image& img);

// Retina-mask sidecars: 1-bit grayscale PNG with the source image's content
// hash stored in a tEXt chunk so stale caches are detectable.
void write_png_mask1(const std::string& path, const Mask& mask, std::uint64_t source_hash);

struct MaskFile {
  Mask mask;
  std::uint64_t source_hash = 0;
};
std::optional<MaskFile> read_png_mask1(const std::string& path);

}  // namespace retssl
