#include "retssl/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace retssl {

size_t Mask::count() const {
  return static_cast<size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (src.height == out_h && src.width == out_w) return src;
  if (src.empty() || out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("resize_bilinear: empty input or bad target size");
  Image dst(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int c = 0; c < src.channels; ++c) {
        const float top = src.at(y0, x0, c) * (1.f - wx) + src.at(y0, x1, c) * wx;
        const float bot = src.at(y1, x0, c) * (1.f - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = top * (1.f - wy) + bot * wy;
      }
    }
  }
  return dst;
}

Image crop(const Image& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.height || x0 + w > src.width)
    throw std::invalid_argument("crop: window out of bounds");
  Image dst(h, w, src.channels);
  const size_t row_bytes = static_cast<size_t>(w) * src.channels * sizeof(float);
  for (int y = 0; y < h; ++y) {
    const size_t src_off =
        (static_cast<size_t>(y0 + y) * src.width + x0) * src.channels;
    std::memcpy(&dst.at(y, 0, 0), src.data.data() + src_off, row_bytes);
  }
  return dst;
}

Image hflip(const Image& src) {
  Image dst(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c)
        dst.at(y, x, c) = src.at(y, src.width - 1 - x, c);
  return dst;
}

Mask crop(const Mask& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.height || x0 + w > src.width)
    throw std::invalid_argument("crop: window out of bounds");
  Mask dst(h, w);
  for (int y = 0; y < h; ++y)
    std::memcpy(&dst.at(y, 0), src.data.data() + static_cast<size_t>(y0 + y) * src.width + x0,
                static_cast<size_t>(w));
  return dst;
}

Mask resize_nearest(const Mask& src, int out_h, int out_w) {
  if (src.height == out_h && src.width == out_w) return src;
  Mask dst(out_h, out_w);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const int yy = std::min(src.height - 1, static_cast<int>((y + 0.5) * sy));
    for (int x = 0; x < out_w; ++x) {
      const int xx = std::min(src.width - 1, static_cast<int>((x + 0.5) * sx));
      dst.at(y, x) = src.at(yy, xx);
    }
  }
  return dst;
}

Mask hflip(const Mask& src) {
  Mask dst(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      dst.at(y, x) = src.at(y, src.width - 1 - x);
  return dst;
}

std::vector<float> luminance(const Image& img) {
  std::vector<float> lum(static_cast<size_t>(img.height) * img.width);
  if (img.channels == 1) {
    std::copy(img.data.begin(), img.data.end(), lum.begin());
    return lum;
  }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      lum[static_cast<size_t>(y) * img.width + x] =
          0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
  return lum;
}

std::uint64_t content_hash(const Image& img) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const int dims[3] = {img.height, img.width, img.channels};
  mix(dims, sizeof(dims));
  mix(img.data.data(), img.data.size() * sizeof(float));
  return h;
}

}  // namespace retssl
