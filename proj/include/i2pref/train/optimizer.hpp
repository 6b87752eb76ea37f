// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "i2pref/autograd/tape.hpp"

namespace i2pref::train {

/// Adam with bias correction and global gradient-norm clipping.
template <typename T>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const ag::ParameterStore<T>& ps) {
    m_.reserve(ps.size());
    v_.reserve(ps.size());
    for (const auto& p : ps) {
      m_.push_back(ag::Mat<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(ag::Mat<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  long steps() const { return step_; }
  void set_steps(long s) { step_ = s; }
  std::vector<ag::Mat<T>>& first_moments() { return m_; }
  std::vector<ag::Mat<T>>& second_moments() { return v_; }
  const std::vector<ag::Mat<T>>& first_moments() const { return m_; }
  const std::vector<ag::Mat<T>>& second_moments() const { return v_; }

  static double grad_norm(const ag::ParameterStore<T>& ps) {
    double s = 0;
    for (const auto& p : ps) s += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(s);
  }

  /// Applies one update from the accumulated gradients; returns the pre-clip norm.
  double step(ag::ParameterStore<T>& ps, double lr, double clip) {
    const double norm = grad_norm(ps);
    if (!std::isfinite(norm)) throw NumericalFailure("non-finite gradient norm");
    const double factor = (clip > 0 && norm > clip) ? clip / norm : 1.0;
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T e = static_cast<T>(eps);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = ps[i];
      const auto g = (p.grad.array() * static_cast<T>(factor)).eval();
      m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
      p.value.array() -= step_size * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + e);
    }
    return norm;
  }

 private:
  std::vector<ag::Mat<T>> m_, v_;
  long step_ = 0;
};

}  // namespace i2pref::train
