// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "i2pref/autograd/tape.hpp"
#include "i2pref/error.hpp"

namespace i2pref {

/// RGB image with values in [0, 1], stored row-major with interleaved channels.
struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // height * width * 3

  ImageTensor() = default;
  ImageTensor(int h, int w, float fill = 0.f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  void validate() const {
    if (height <= 0 || width <= 0) throw InvalidInput("image: non-positive size");
    if (pixels.size() != static_cast<std::size_t>(height) * width * 3) throw InvalidInput("image: pixel buffer size mismatch");
    for (float v : pixels)
      if (!std::isfinite(v) || v < 0.f || v > 1.f) throw InvalidInput("image: pixel values must be finite and in [0,1]");
  }

  /// Channel-major [3, H*W] matrix, the encoder's input layout.
  template <typename T>
  ag::Mat<T> channel_major() const {
    ag::Mat<T> m(3, static_cast<Eigen::Index>(height) * width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) m(c, static_cast<Eigen::Index>(y) * width + x) = static_cast<T>(at(y, x, c));
    return m;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

}  // namespace i2pref
