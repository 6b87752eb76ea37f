// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>

#include "i2pref/geometry/nearest_neighbor.hpp"

namespace i2pref {

/// Threshold used for F-score reporting.
inline constexpr double kDefaultFscoreTau = 0.001;

/// Below this many pairwise evaluations the exhaustive scan beats building a tree.
inline constexpr std::size_t kBruteForcePairLimit = 4096;

template <typename T>
NNResult<T> nearest_neighbors(PointSpan<T> query, PointSpan<T> target) {
  if (query.size() * target.size() <= kBruteForcePairLimit) return nn_bruteforce(query, target);
  return nn_accelerated(query, target);
}

template <typename T>
T mean_of(const std::vector<T>& v) {
  double s = 0;
  for (T x : v) s += static_cast<double>(x);
  return static_cast<T>(s / static_cast<double>(v.size()));
}

/// Symmetric Chamfer distance on squared Euclidean nearest-neighbor distances,
/// each direction averaged over its own point count.
template <typename T>
T chamfer_distance(PointSpan<T> p1, PointSpan<T> p2) {
  require_nonempty(p1, "chamfer_distance(p1)");
  require_nonempty(p2, "chamfer_distance(p2)");
  const auto fwd = nearest_neighbors(p1, p2);
  const auto bwd = nearest_neighbors(p2, p1);
  return mean_of(fwd.sq_distances) + mean_of(bwd.sq_distances);
}

struct MetricReport {
  double chamfer = 0;
  double f1 = 0;
  double precision = 0;
  double recall = 0;
  double tau = kDefaultFscoreTau;
};

inline double harmonic_f1(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

/// Precision: share of predicted points whose nearest ground-truth squared
/// distance is strictly below tau. Recall: the same from the ground-truth side.
/// The report also carries the Chamfer distance computed from the same
/// neighbor queries.
template <typename T>
MetricReport fscore(PointSpan<T> pred, PointSpan<T> gt, double tau = kDefaultFscoreTau) {
  require_nonempty(pred, "fscore(pred)");
  require_nonempty(gt, "fscore(gt)");
  if (!(tau > 0) || !std::isfinite(tau)) throw InvalidInput("fscore: tau must be a positive finite number");
  const auto fwd = nearest_neighbors(pred, gt);
  const auto bwd = nearest_neighbors(gt, pred);

  std::size_t hit_p = 0, hit_r = 0;
  for (T d : fwd.sq_distances) hit_p += static_cast<double>(d) < tau;
  for (T d : bwd.sq_distances) hit_r += static_cast<double>(d) < tau;

  MetricReport r;
  r.tau = tau;
  r.precision = static_cast<double>(hit_p) / static_cast<double>(pred.size());
  r.recall = static_cast<double>(hit_r) / static_cast<double>(gt.size());
  r.f1 = harmonic_f1(r.precision, r.recall);
  r.chamfer = static_cast<double>(mean_of(fwd.sq_distances)) + static_cast<double>(mean_of(bwd.sq_distances));
  return r;
}

}  // namespace i2pref
