// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "i2pref/geometry/point_cloud.hpp"

namespace i2pref {

enum class SamplingMode { FarthestPoint, Uniform };

namespace detail {
inline void check_sample_count(std::size_t count, std::size_t k, const char* what) {
  if (count == 0) throw InvalidInput(std::string(what) + ": point cloud is empty");
  if (k < 1 || k > count)
    throw InvalidInput(std::string(what) + ": k=" + std::to_string(k) + " must lie in [1, " + std::to_string(count) +
                       "]");
}
}  // namespace detail

/// Farthest point sampling from a fixed first index. Returns selected indices
/// in selection order; ties in the max-min criterion go to the lowest index.
template <typename T>
std::vector<std::size_t> fps_indices_from(PointSpan<T> cloud, std::size_t k, std::size_t first) {
  detail::check_sample_count(cloud.size(), k, "fps_sample");
  if (first >= cloud.size()) throw InvalidInput("fps_sample: first index out of range");
  const std::size_t n = cloud.size();
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::size_t current = first;
  for (std::size_t step = 0; step < k; ++step) {
    picked.push_back(current);
    taken[current] = true;
    const auto c = cloud[current];
    std::size_t next = 0;
    double next_d = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = cloud[i];
      const double d = squared_distance<double>({double(p[0]), double(p[1]), double(p[2])},
                                                {double(c[0]), double(c[1]), double(c[2])});
      if (d < min_sq[i]) min_sq[i] = d;
      if (!taken[i] && min_sq[i] > next_d) {
        next_d = min_sq[i];
        next = i;
      }
    }
    current = next;
  }
  return picked;
}

/// First pick drawn from a generator seeded with `seed`.
template <typename T>
std::vector<std::size_t> fps_indices(PointSpan<T> cloud, std::size_t k, std::uint64_t seed) {
  detail::check_sample_count(cloud.size(), k, "fps_sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  return fps_indices_from(cloud, k, pick(rng));
}

/// Seeded k-subset without replacement (indices in ascending order).
template <typename T>
std::vector<std::size_t> uniform_indices(PointSpan<T> cloud, std::size_t k, std::uint64_t seed) {
  detail::check_sample_count(cloud.size(), k, "uniform_sample");
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename T>
BasicPointCloud<T> gather(PointSpan<T> cloud, const std::vector<std::size_t>& indices) {
  BasicPointCloud<T> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(cloud[i]);
  return out;
}

template <typename T>
BasicPointCloud<T> fps_sample(PointSpan<T> cloud, std::size_t k, std::uint64_t seed) {
  return gather(cloud, fps_indices(cloud, k, seed));
}

template <typename T>
std::vector<std::size_t> sample_indices(PointSpan<T> cloud, std::size_t k, std::uint64_t seed, SamplingMode mode) {
  return mode == SamplingMode::FarthestPoint ? fps_indices(cloud, k, seed) : uniform_indices(cloud, k, seed);
}

}  // namespace i2pref
