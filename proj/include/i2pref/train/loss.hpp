// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "i2pref/autograd/chamfer.hpp"
#include "i2pref/geometry/metrics.hpp"

namespace i2pref::train {

struct LossBreakdown {
  double total = 0;
  double refined_cd = 0;  // CD(refined, gt)
  double coarse_cd = 0;   // CD(coarse, gt)
  double alpha = 0;
};

/// CD(refined, gt) + alpha * CD(coarse, gt).
template <typename T>
LossBreakdown total_loss(PointSpan<T> coarse, PointSpan<T> refined, PointSpan<T> gt, double alpha) {
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw InvalidInput("total_loss: alpha must be finite and >= 0");
  LossBreakdown b;
  b.alpha = alpha;
  b.refined_cd = static_cast<double>(chamfer_distance(refined, gt));
  b.coarse_cd = static_cast<double>(chamfer_distance(coarse, gt));
  b.total = b.refined_cd + alpha * b.coarse_cd;
  return b;
}

/// Differentiable counterpart. The coarse term is skipped when alpha is 0 so
/// that gradients match the refined-only objective exactly.
template <typename T>
struct LossTerms {
  ag::Var<T> total;
  ag::Var<T> refined_cd;
  ag::Var<T> coarse_cd;
};

template <typename T>
LossTerms<T> total_loss(ag::Var<T> coarse, ag::Var<T> refined, ag::Var<T> gt, T alpha) {
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw InvalidInput("total_loss: alpha must be finite and >= 0");
  LossTerms<T> l;
  l.refined_cd = ag::chamfer(refined, gt);
  l.coarse_cd = ag::chamfer(coarse, gt);
  l.total = alpha > 0 ? ag::add(l.refined_cd, ag::scale(l.coarse_cd, alpha)) : l.refined_cd;
  return l;
}

}  // namespace i2pref::train
