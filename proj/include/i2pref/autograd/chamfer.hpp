// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "i2pref/autograd/ops.hpp"
#include "i2pref/geometry/metrics.hpp"

namespace i2pref::ag {

template <typename T>
PointSpan<T> as_points(const Mat<T>& m) {
  if (m.cols() != 3) throw ConfigError("expected an N x 3 coordinate matrix");
  return {m.data(), static_cast<std::size_t>(m.rows())};
}

/// Differentiable symmetric Chamfer distance between two N x 3 nodes.
/// The nearest-neighbor assignment is held fixed in the backward pass, which
/// is the exact gradient wherever neighbors are unique.
template <typename T>
Var<T> chamfer(Var<T> p1, Var<T> p2) {
  auto& t = *p1.tape;
  const auto a = as_points(p1.value());
  const auto b = as_points(p2.value());
  require_nonempty(a, "chamfer(p1)");
  require_nonempty(b, "chamfer(p2)");
  auto fwd = nearest_neighbors(a, b);
  auto bwd = nearest_neighbors(b, a);
  Mat<T> out(1, 1);
  out(0, 0) = mean_of(fwd.sq_distances) + mean_of(bwd.sq_distances);
  if (!t.needs_grad({p1, p2})) return t.constant(std::move(out));
  return t.record(std::move(out), {p1, p2},
                  [p1, p2, fi = std::move(fwd.indices), bi = std::move(bwd.indices)](Tape<T>& t, const Mat<T>& g) {
                    const auto& av = t.value(p1);
                    const auto& bv = t.value(p2);
                    const T s1 = T(2) * g(0, 0) / T(av.rows());
                    const T s2 = T(2) * g(0, 0) / T(bv.rows());
                    Mat<T> ga = Mat<T>::Zero(av.rows(), 3);
                    Mat<T> gb = Mat<T>::Zero(bv.rows(), 3);
                    for (Eigen::Index i = 0; i < av.rows(); ++i) {
                      const auto j = static_cast<Eigen::Index>(fi[static_cast<std::size_t>(i)]);
                      const Eigen::Matrix<T, 1, 3> d = (av.row(i) - bv.row(j)) * s1;
                      ga.row(i) += d;
                      gb.row(j) -= d;
                    }
                    for (Eigen::Index j = 0; j < bv.rows(); ++j) {
                      const auto i = static_cast<Eigen::Index>(bi[static_cast<std::size_t>(j)]);
                      const Eigen::Matrix<T, 1, 3> d = (bv.row(j) - av.row(i)) * s2;
                      gb.row(j) += d;
                      ga.row(i) -= d;
                    }
                    if (t.requires_grad(p1)) t.grad(p1) += ga;
                    if (t.requires_grad(p2)) t.grad(p2) += gb;
                  });
}

}  // namespace i2pref::ag
