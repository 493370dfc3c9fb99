#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace retssl {

// Interleaved row-major float image, values expected in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.f)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

// Binary mask, one byte per pixel, values in {0,1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t count() const;
};

// Bilinear resample with half-pixel centers. Same-size input is returned
// unchanged so identity transforms stay bit-exact.
Image resize_bilinear(const Image& src, int out_h, int out_w);

Image crop(const Image& src, int y0, int x0, int h, int w);

Image hflip(const Image& src);

Mask crop(const Mask& src, int y0, int x0, int h, int w);

// Nearest-neighbor resample; masks must stay binary.
Mask resize_nearest(const Mask& src, int out_h, int out_w);

Mask hflip(const Mask& src);

// Rec.601 luma.
std::vector<float> luminance(const Image& img);

// FNV-1a over the raw pixel bytes; used as the retina-mask cache key.
std::uint64_t content_hash(const Image& img);

}  // namespace retssl
