#include "retssl/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace retssl {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

constexpr char kHashKey[] = "source-hash";

}  // namespace

Image read_png_rgb(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open image file: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("PNG decode error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int rowbytes = static_cast<int>(png_get_rowbytes(png, info));
  buffer.resize(static_cast<size_t>(h) * rowbytes);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<size_t>(y) * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    const png_byte* row = buffer.data() + static_cast<size_t>(y) * rowbytes;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(row[x * 3 + c]) / 255.f;
  }
  return img;
}

void write_png_rgb8(const std::string& path, const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("write_png_rgb8: need 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<png_byte> buffer(static_cast<size_t>(img.height) * img.width * 3);
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(y, x, c), 0.f, 1.f);
        buffer[(static_cast<size_t>(y) * img.width + x) * 3 + c] =
            static_cast<png_byte>(std::lround(v * 255.f));
      }
  for (int y = 0; y < img.height; ++y)
    rows[y] = buffer.data() + static_cast<size_t>(y) * img.width * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png_mask1(const std::string& path, const Mask& mask, std::uint64_t source_hash) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  const int stride = (mask.width + 7) / 8;
  std::vector<png_byte> buffer(static_cast<size_t>(mask.height) * stride, 0);
  std::vector<png_bytep> rows(mask.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, mask.width, mask.height, 1, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  char hash_text[17];
  std::snprintf(hash_text, sizeof(hash_text), "%016llx",
                static_cast<unsigned long long>(source_hash));
  png_text text;
  std::memset(&text, 0, sizeof(text));
  text.compression = PNG_TEXT_COMPRESSION_NONE;
  text.key = const_cast<char*>(kHashKey);
  text.text = hash_text;
  text.text_length = 16;
  png_set_text(png, info, &text, 1);

  png_write_info(png, info);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x))
        buffer[static_cast<size_t>(y) * stride + x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
  for (int y = 0; y < mask.height; ++y)
    rows[y] = buffer.data() + static_cast<size_t>(y) * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::optional<MaskFile> read_png_mask1(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) return std::nullopt;

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    return std::nullopt;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return std::nullopt;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return std::nullopt;
  }
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return std::nullopt;
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    return std::nullopt;
  }
  png_set_packing(png);  // unpack 1-bit samples to one byte each
  png_read_update_info(png, info);

  MaskFile out;
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int rowbytes = static_cast<int>(png_get_rowbytes(png, info));
  buffer.resize(static_cast<size_t>(h) * rowbytes);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<size_t>(y) * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  png_textp texts = nullptr;
  int n_text = 0;
  png_get_text(png, info, &texts, &n_text);
  for (int i = 0; i < n_text; ++i) {
    if (std::strcmp(texts[i].key, kHashKey) == 0)
      out.source_hash = std::strtoull(texts[i].text, nullptr, 16);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  out.mask = Mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.mask.at(y, x) = buffer[static_cast<size_t>(y) * rowbytes + x] ? 1 : 0;
  return out;
}

}  // namespace retssl
