// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "i2pref/error.hpp"

namespace i2pref::train {

/// Coarse-loss weight, linearly annealed per epoch.
struct LossSchedule {
  double alpha_start = 0.7;
  double alpha_end = 0.1;
  int total_epochs = 1;

  void validate() const {
    if (!(alpha_start >= 0) || !(alpha_end >= 0) || !std::isfinite(alpha_start) || !std::isfinite(alpha_end))
      throw ConfigError("train.alpha_start/alpha_end: must be finite and >= 0");
    if (total_epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  }
};

/// alpha_start at epoch 0, alpha_end at the last epoch, linear in between.
/// A single-epoch schedule stays at alpha_start.
inline double alpha_at(const LossSchedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs)
    throw InvalidInput("alpha_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.total_epochs) + ")");
  if (s.total_epochs == 1) return s.alpha_start;
  const double f = static_cast<double>(epoch) / static_cast<double>(s.total_epochs - 1);
  // std::lerp is exact at both ends and monotone in f.
  const double a = std::lerp(s.alpha_start, s.alpha_end, f);
  return std::clamp(a, std::min(s.alpha_start, s.alpha_end), std::max(s.alpha_start, s.alpha_end));
}

/// Cosine decay from base_lr at step 0 to 0 at total_steps.
inline double cosine_lr(double base_lr, long step, long total_steps) {
  if (total_steps <= 0) return base_lr;
  const double f = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

}  // namespace i2pref::train
