// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "i2pref/error.hpp"

namespace i2pref {

template <typename T>
using Vec3 = std::array<T, 3>;

template <typename T>
inline T squared_distance(const Vec3<T>& a, const Vec3<T>& b) {
  const T dx = a[0] - b[0];
  const T dy = a[1] - b[1];
  const T dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Read-only view over contiguous xyz triples. Works for PointCloud storage and
/// for row-major N x 3 matrices alike.
template <typename T>
class PointSpan {
 public:
  PointSpan() = default;
  PointSpan(const T* xyz, std::size_t count) : xyz_(xyz), count_(count) {}

  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  const T* data() const noexcept { return xyz_; }

  Vec3<T> operator[](std::size_t i) const {
    const T* p = xyz_ + 3 * i;
    return {p[0], p[1], p[2]};
  }

 private:
  const T* xyz_ = nullptr;
  std::size_t count_ = 0;
};

/// Ordered set of 3D points stored as flat xyz.
template <typename T>
class BasicPointCloud {
 public:
  using value_type = T;

  BasicPointCloud() = default;
  explicit BasicPointCloud(std::vector<T> xyz) : xyz_(std::move(xyz)) {
    if (xyz_.size() % 3 != 0) throw InvalidInput("point buffer length is not a multiple of 3");
  }
  BasicPointCloud(std::initializer_list<Vec3<T>> pts) {
    for (const auto& p : pts) push_back(p);
  }

  static BasicPointCloud from_points(std::span<const Vec3<T>> pts) {
    BasicPointCloud c;
    c.reserve(pts.size());
    for (const auto& p : pts) c.push_back(p);
    return c;
  }

  std::size_t size() const noexcept { return xyz_.size() / 3; }
  bool empty() const noexcept { return xyz_.empty(); }
  void reserve(std::size_t n) { xyz_.reserve(3 * n); }
  void push_back(const Vec3<T>& p) { xyz_.insert(xyz_.end(), p.begin(), p.end()); }

  Vec3<T> operator[](std::size_t i) const { return {xyz_[3 * i], xyz_[3 * i + 1], xyz_[3 * i + 2]}; }
  void set(std::size_t i, const Vec3<T>& p) {
    xyz_[3 * i] = p[0];
    xyz_[3 * i + 1] = p[1];
    xyz_[3 * i + 2] = p[2];
  }

  const std::vector<T>& flat() const noexcept { return xyz_; }
  std::vector<T>& flat() noexcept { return xyz_; }
  const T* data() const noexcept { return xyz_.data(); }

  PointSpan<T> span() const noexcept { return {xyz_.data(), size()}; }
  operator PointSpan<T>() const noexcept { return span(); }

  bool all_finite() const {
    for (T v : xyz_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  BasicPointCloud<U> cast() const {
    std::vector<U> out(xyz_.begin(), xyz_.end());
    return BasicPointCloud<U>(std::move(out));
  }

  friend bool operator==(const BasicPointCloud&, const BasicPointCloud&) = default;

 private:
  std::vector<T> xyz_;
};

using PointCloud = BasicPointCloud<double>;

template <typename T>
inline void require_nonempty(PointSpan<T> c, const char* what) {
  if (c.empty()) throw InvalidInput(std::string(what) + ": point cloud is empty");
}

template <typename T>
inline void require_finite(PointSpan<T> c, const char* what) {
  for (std::size_t i = 0; i < 3 * c.size(); ++i)
    if (!std::isfinite(c.data()[i]))
      throw InvalidInput(std::string(what) + ": non-finite coordinate at point " + std::to_string(i / 3));
}

template <typename T>
struct Normalization {
  Vec3<T> center{0, 0, 0};
  T scale = 1;

  Vec3<T> apply(const Vec3<T>& p) const {
    return {(p[0] - center[0]) / scale, (p[1] - center[1]) / scale, (p[2] - center[2]) / scale};
  }
  Vec3<T> invert(const Vec3<T>& p) const {
    return {p[0] * scale + center[0], p[1] * scale + center[1], p[2] * scale + center[2]};
  }
};

template <typename T>
struct NormalizedCloud {
  BasicPointCloud<T> cloud;
  Normalization<T> transform;
};

/// Centers on the centroid and divides by the largest distance from it.
/// Coincident inputs keep scale 1.
template <typename T>
NormalizedCloud<T> normalize(PointSpan<T> cloud) {
  require_nonempty(cloud, "normalize");
  require_finite(cloud, "normalize");
  const std::size_t n = cloud.size();
  // Accumulate in long double so the centroid is as close to exact as we can get.
  long double sx = 0, sy = 0, sz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = cloud[i];
    sx += p[0];
    sy += p[1];
    sz += p[2];
  }
  Normalization<T> tf;
  tf.center = {static_cast<T>(sx / n), static_cast<T>(sy / n), static_cast<T>(sz / n)};
  T max_sq = 0;
  for (std::size_t i = 0; i < n; ++i) max_sq = std::max(max_sq, squared_distance(cloud[i], tf.center));
  const T max_dist = std::sqrt(max_sq);
  tf.scale = max_dist < T(1e-12) ? T(1) : max_dist;

  NormalizedCloud<T> out;
  out.transform = tf;
  out.cloud.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.cloud.push_back(tf.apply(cloud[i]));
  return out;
}

template <typename T>
BasicPointCloud<T> transform_points(PointSpan<T> cloud, const Normalization<T>& tf) {
  BasicPointCloud<T> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) out.push_back(tf.apply(cloud[i]));
  return out;
}

}  // namespace i2pref
