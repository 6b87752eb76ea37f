// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "i2pref/autograd/ops.hpp"

namespace i2pref::model {

using ag::Mat;
using ag::Parameter;
using ag::ParameterStore;
using ag::Tape;
using ag::Var;

using Rng = std::mt19937_64;

inline constexpr double kRmsEps = 1e-6;

enum class Init { FanIn, Zero };

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) or all zeros.
template <typename T>
Mat<T> init_matrix(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Init init, Rng& rng) {
  Mat<T> m = Mat<T>::Zero(rows, cols);
  if (init == Init::Zero) return m;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;  // in x out
  Parameter<T>* bias = nullptr;    // 1 x out

  Linear() = default;
  Linear(ParameterStore<T>& ps, const std::string& name, int in, int out, Rng& rng, Init init = Init::FanIn) {
    weight = &ps.add(name + ".weight", init_matrix<T>(in, out, in, init, rng));
    bias = &ps.add(name + ".bias", Mat<T>::Zero(1, out));
  }

  int in_width() const { return static_cast<int>(weight->value.rows()); }
  int out_width() const { return static_cast<int>(weight->value.cols()); }

  Var<T> operator()(Tape<T>& t, Var<T> x) const { return ag::linear(x, t.parameter(*weight), t.parameter(*bias)); }
};

/// Per-position RMS normalization with a learned gain (initialized to 1).
template <typename T>
struct RMSNorm {
  Parameter<T>* gain = nullptr;
  bool channels_in_rows = false;  // true for channel-major feature maps [C, HW]

  RMSNorm() = default;
  RMSNorm(ParameterStore<T>& ps, const std::string& name, int width, bool channel_major) : channels_in_rows(channel_major) {
    gain = &ps.add(name + ".gain", channel_major ? Mat<T>::Ones(width, 1) : Mat<T>::Ones(1, width));
  }

  Var<T> operator()(Tape<T>& t, Var<T> x) const {
    return channels_in_rows ? ag::rms_norm_cols(x, t.parameter(*gain), T(kRmsEps))
                            : ag::rms_norm_rows(x, t.parameter(*gain), T(kRmsEps));
  }
};

/// A channel-major activation: data is [channels, height * width].
template <typename T>
struct FeatureMap {
  Var<T> data;
  Eigen::Index channels = 0, height = 0, width = 0;
};

template <typename T>
struct Conv2d {
  Parameter<T>* weight = nullptr;  // out x (in * k * k)
  Parameter<T>* bias = nullptr;    // out x 1
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParameterStore<T>& ps, const std::string& name, int in, int out, int k, int stride_, Rng& rng,
         Init init = Init::FanIn)
      : in_channels(in), out_channels(out), kernel(k), stride(stride_), pad(k / 2) {
    weight = &ps.add(name + ".weight", init_matrix<T>(out, in * k * k, in * k * k, init, rng));
    bias = &ps.add(name + ".bias", Mat<T>::Zero(out, 1));
  }

  FeatureMap<T> operator()(Tape<T>& t, const FeatureMap<T>& x) const {
    if (x.channels != in_channels)
      throw ConfigError("conv2d: expected " + std::to_string(in_channels) + " input channels, got " +
                        std::to_string(x.channels));
    const ag::ConvGeometry geo{x.channels, x.height, x.width, kernel, stride, pad};
    auto y = ag::conv2d(x.data, geo, t.parameter(*weight), t.parameter(*bias));
    return {y, out_channels, geo.out_height(), geo.out_width()};
  }
};

/// Multi-head attention with learned q/k/v/output projections.
template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& ps, const std::string& name, int width, int kv_width, int heads_, Rng& rng,
                     Init out_init = Init::FanIn)
      : heads(heads_) {
    if (heads <= 0 || width % heads != 0)
      throw ConfigError(name + ": width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                        " heads");
    q = Linear<T>(ps, name + ".q", width, width, rng);
    k = Linear<T>(ps, name + ".k", kv_width, width, rng);
    v = Linear<T>(ps, name + ".v", kv_width, width, rng);
    o = Linear<T>(ps, name + ".o", width, width, rng, out_init);
  }

  Var<T> operator()(Tape<T>& t, Var<T> queries, Var<T> context, std::vector<Mat<T>>* weights = nullptr) const {
    auto a = ag::attention(q(t, queries), k(t, context), v(t, context), heads, weights);
    return o(t, a);
  }
};

/// Two-layer perceptron with SiLU in between.
template <typename T>
struct Mlp {
  Linear<T> fc1, fc2;

  Mlp() = default;
  Mlp(ParameterStore<T>& ps, const std::string& name, int in, int hidden, int out, Rng& rng,
      Init out_init = Init::FanIn)
      : fc1(ps, name + ".fc1", in, hidden, rng), fc2(ps, name + ".fc2", hidden, out, rng, out_init) {}

  Var<T> operator()(Tape<T>& t, Var<T> x) const { return fc2(t, ag::silu(fc1(t, x))); }
};

}  // namespace i2pref::model
