// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "i2pref/geometry/point_cloud.hpp"

namespace i2pref {

template <typename T>
struct NNResult {
  std::vector<std::size_t> indices;
  std::vector<T> sq_distances;
};

/// Exhaustive scan; ties resolve to the lowest target index.
template <typename T>
NNResult<T> nn_bruteforce(PointSpan<T> query, PointSpan<T> target) {
  require_nonempty(query, "nn_bruteforce(query)");
  require_nonempty(target, "nn_bruteforce(target)");
  NNResult<T> r;
  r.indices.resize(query.size());
  r.sq_distances.resize(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto q = query[i];
    std::size_t best = 0;
    T best_d = squared_distance(q, target[0]);
    for (std::size_t j = 1; j < target.size(); ++j) {
      const T d = squared_distance(q, target[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    r.indices[i] = best;
    r.sq_distances[i] = best_d;
  }
  return r;
}

/// Static 3-d tree over a borrowed point buffer. Queries are exact: the
/// reported squared distance is computed with the same expression as the
/// brute-force scan, and equal-distance candidates resolve to the lowest index.
template <typename T>
class KdTree {
 public:
  explicit KdTree(PointSpan<T> points, std::size_t leaf_size = 8) : points_(points), leaf_size_(leaf_size) {
    require_nonempty(points, "KdTree");
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    nodes_.reserve(2 * points.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points.size()));
  }

  std::size_t size() const noexcept { return points_.size(); }

  /// Returns (index, squared distance) of the nearest stored point.
  std::pair<std::size_t, T> nearest(const Vec3<T>& q) const {
    Best best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<T>::infinity()};
    search(0, q, best);
    return {best.index, best.sq};
  }

 private:
  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
    int axis = -1;
    T split = 0;
  };
  struct Best {
    std::size_t index;
    T sq;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    Vec3<T> lo, hi;
    lo.fill(std::numeric_limits<T>::infinity());
    hi.fill(-std::numeric_limits<T>::infinity());
    for (std::uint32_t i = begin; i < end; ++i) {
      const auto p = points_[order_[i]];
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] - lo[axis] <= T(0)) return id;  // all coincident: keep as leaf

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const T split = points_[order_[mid]][axis];
    const std::int32_t l = build(begin, mid);
    const std::int32_t r = build(mid, end);
    Node& n = nodes_[id];
    n.left = l;
    n.right = r;
    n.axis = axis;
    n.split = split;
    return id;
  }

  void search(std::int32_t id, const Vec3<T>& q, Best& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = order_[i];
        const T d = squared_distance(q, points_[idx]);
        if (d < best.sq || (d == best.sq && idx < best.index)) best = {idx, d};
      }
      return;
    }
    // Left holds coordinates <= split, right holds coordinates >= split.
    const T diff = q[n.axis] - n.split;
    const std::int32_t near = diff < 0 ? n.left : n.right;
    const std::int32_t far = diff < 0 ? n.right : n.left;
    search(near, q, best);
    // Non-strict so that equal-distance candidates on the far side are still visited.
    if (diff * diff <= best.sq) search(far, q, best);
  }

  PointSpan<T> points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

template <typename T>
NNResult<T> nn_accelerated(PointSpan<T> query, PointSpan<T> target) {
  require_nonempty(query, "nn_accelerated(query)");
  require_nonempty(target, "nn_accelerated(target)");
  const KdTree<T> tree(target);
  NNResult<T> r;
  r.indices.resize(query.size());
  r.sq_distances.resize(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto [idx, d] = tree.nearest(query[i]);
    r.indices[i] = idx;
    r.sq_distances[i] = d;
  }
  return r;
}

}  // namespace i2pref
