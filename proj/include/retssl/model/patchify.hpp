#pragma once

#include "retssl/image.hpp"
#include "retssl/nn/tape.hpp"

#include <memory>
#include <stdexcept>
#include <vector>

namespace retssl::model {

// Row p of the output holds patch (p / G, p % G); within a row, values are
// ordered pixel row-major with interleaved channels, matching Image layout.
template <class S>
nn::Mat<S> patchify(const Image& im, int patch) {
  if (im.channels != 3) throw std::invalid_argument("patchify: need 3 channels");
  if (im.width % patch != 0 || im.height % patch != 0 || im.width != im.height)
    throw std::invalid_argument("patchify: image not divisible into square patches");
  const int g = im.width / patch;
  nn::Mat<S> out(g * g, patch * patch * 3);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const int p = gy * g + gx;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            out(p, (py * patch + px) * 3 + c) =
                static_cast<S>(im.at(gy * patch + py, gx * patch + px, c));
    }
  return out;
}

template <class S>
Image unpatchify(const nn::Mat<S>& patches, int image_size, int patch) {
  const int g = image_size / patch;
  if (image_size % patch != 0 || patches.rows() != g * g || patches.cols() != patch * patch * 3)
    throw std::invalid_argument("unpatchify: shape mismatch");
  Image im(image_size, image_size, 3);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const int p = gy * g + gx;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            im.at(gy * patch + py, gx * patch + px, c) =
                static_cast<float>(patches(p, (py * patch + px) * 3 + c));
    }
  return im;
}

// Flat index map taking a (G*G) x (patch*patch*3) patch matrix to the
// (H*W) x 3 interleaved pixel matrix of the same image; shared across tapes.
inline std::shared_ptr<const std::vector<int>> unpatchify_index_map(int image_size, int patch) {
  const int g = image_size / patch;
  auto map = std::make_shared<std::vector<int>>(
      static_cast<size_t>(image_size) * image_size * 3);
  const int cols = patch * patch * 3;
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x) {
      const int p = (y / patch) * g + (x / patch);
      const int in_patch = ((y % patch) * patch + (x % patch)) * 3;
      for (int c = 0; c < 3; ++c)
        (*map)[(static_cast<size_t>(y) * image_size + x) * 3 + c] =
            p * cols + in_patch + c;
    }
  return map;
}

}  // namespace retssl::model
