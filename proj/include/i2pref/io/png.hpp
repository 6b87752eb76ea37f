// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "i2pref/model/image.hpp"

namespace i2pref::io {

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

/// Raw 8-bit RGB raster.
struct Rgb8 {
  int height = 0, width = 0;
  std::vector<unsigned char> data;
};

inline void write_png(const std::string& path, const Rgb8& img) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Decodes any PNG to 8-bit RGB (palette expanded, alpha and 16-bit stripped).
inline Rgb8 read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError("not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Rgb8 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: " + path);
  }
  img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline Rgb8 to_rgb8(const ImageTensor& img) {
  Rgb8 out{img.height, img.width, std::vector<unsigned char>(img.pixels.size())};
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.data[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.f, 1.f) * 255.f));
  return out;
}

/// Center-crops to the target aspect ratio, then resamples bilinearly to
/// height x width. Same-size inputs map exactly to v / 255.
inline ImageTensor to_image_tensor(const Rgb8& src, int height, int width) {
  ImageTensor out(height, width);
  if (src.height == height && src.width == width) {
    for (std::size_t i = 0; i < src.data.size(); ++i) out.pixels[i] = static_cast<float>(src.data[i]) / 255.f;
    return out;
  }
  const double target_aspect = static_cast<double>(width) / height;
  double crop_w = src.width, crop_h = src.height;
  if (crop_w / crop_h > target_aspect)
    crop_w = crop_h * target_aspect;
  else
    crop_h = crop_w / target_aspect;
  const double x0 = (src.width - crop_w) / 2, y0 = (src.height - crop_h) / 2;
  auto px = [&](int y, int x, int c) {
    y = std::clamp(y, 0, src.height - 1);
    x = std::clamp(x, 0, src.width - 1);
    return static_cast<double>(src.data[(static_cast<std::size_t>(y) * src.width + x) * 3 + c]) / 255.0;
  };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double sy = y0 + (y + 0.5) * crop_h / height - 0.5;
      const double sx = x0 + (x + 0.5) * crop_w / width - 0.5;
      const int iy = static_cast<int>(std::floor(sy)), ix = static_cast<int>(std::floor(sx));
      const double fy = sy - iy, fx = sx - ix;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * px(iy, ix, c) + fx * px(iy, ix + 1, c)) +
                         fy * ((1 - fx) * px(iy + 1, ix, c) + fx * px(iy + 1, ix + 1, c));
        out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return out;
}

inline void write_image(const std::string& path, const ImageTensor& img) { write_png(path, to_rgb8(img)); }

inline ImageTensor read_image(const std::string& path, int height, int width) {
  return to_image_tensor(read_png(path), height, width);
}

}  // namespace i2pref::io
