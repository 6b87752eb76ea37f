// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "i2pref/autograd/tape.hpp"

namespace i2pref::ag {

namespace detail {
template <typename T>
void require_same_shape(const Mat<T>& a, const Mat<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}
}  // namespace detail

template <typename T>
void check_finite(Var<T> v, const std::string& where) {
  if (!v.value().allFinite()) throw NumericalFailure("non-finite activations in " + where);
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  detail::require_same_shape(a.value(), b.value(), "add");
  Mat<T> out = a.value() + b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Mat<T>& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) += g;
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  auto& t = *a.tape;
  Mat<T> out = a.value() * s;
  return t.record(std::move(out), {a}, [a, s](Tape<T>& t, const Mat<T>& g) { t.grad(a) += g * s; });
}

/// Sum of all entries as a 1x1 node.
template <typename T>
Var<T> sum(Var<T> a) {
  auto& t = *a.tape;
  Mat<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape<T>& t, const Mat<T>& g) { t.grad(a).array() += g(0, 0); });
}

/// x W (+ b). x: N x in, W: in x out, b: 1 x out.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  auto& t = *x.tape;
  if (x.cols() != w.rows()) throw ConfigError("linear: input width does not match weight rows");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ConfigError("linear: bias shape mismatch");
  Mat<T> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape<T>& t, const Mat<T>& g) {
    if (t.requires_grad(x)) t.grad(x).noalias() += g * t.value(w).transpose();
    if (t.requires_grad(w)) t.grad(w).noalias() += t.value(x).transpose() * g;
    if (t.requires_grad(b)) t.grad(b) += g.colwise().sum();
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  auto& t = *x.tape;
  if (x.cols() != w.rows()) throw ConfigError("linear: input width does not match weight rows");
  Mat<T> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  return t.record(std::move(out), {x, w}, [x, w](Tape<T>& t, const Mat<T>& g) {
    if (t.requires_grad(x)) t.grad(x).noalias() += g * t.value(w).transpose();
    if (t.requires_grad(w)) t.grad(w).noalias() += t.value(x).transpose() * g;
  });
}

template <typename T>
Var<T> silu(Var<T> x) {
  auto& t = *x.tape;
  const auto& xv = x.value();
  Mat<T> sig = (T(1) + (-xv.array()).exp()).inverse().matrix();
  Mat<T> out = (xv.array() * sig.array()).matrix();
  if (!t.needs_grad({x})) return t.constant(std::move(out));
  return t.record(std::move(out), {x}, [x, sig = std::move(sig)](Tape<T>& t, const Mat<T>& g) {
    const auto& xv = t.value(x);
    t.grad(x).array() += g.array() * sig.array() * (T(1) + xv.array() * (T(1) - sig.array()));
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  auto& t = *x.tape;
  Mat<T> out = x.value().array().tanh().matrix();
  if (!t.needs_grad({x})) return t.constant(std::move(out));
  Mat<T> y = out;
  return t.record(std::move(out), {x}, [x, y = std::move(y)](Tape<T>& t, const Mat<T>& g) {
    t.grad(x).array() += g.array() * (T(1) - y.array().square());
  });
}

/// RMS normalization of each row (feature axis = columns), gain: 1 x C.
template <typename T>
Var<T> rms_norm_rows(Var<T> x, Var<T> gain, T eps) {
  auto& t = *x.tape;
  const auto& xv = x.value();
  if (gain.rows() != 1 || gain.cols() != xv.cols()) throw ConfigError("rms_norm_rows: gain shape mismatch");
  const Eigen::Index n = xv.cols();
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv = ((xv.array().square().rowwise().sum() / T(n)) + eps).rsqrt();
  Mat<T> out = (xv.array().colwise() * inv.array()).matrix();
  out.array().rowwise() *= gain.value().row(0).array();
  if (!t.needs_grad({x, gain})) return t.constant(std::move(out));
  return t.record(std::move(out), {x, gain}, [x, gain, inv = std::move(inv), n](Tape<T>& t, const Mat<T>& g) {
    const auto& xv = t.value(x);
    const auto& gv = t.value(gain);
    if (t.requires_grad(gain)) t.grad(gain) += (g.array() * (xv.array().colwise() * inv.array())).colwise().sum().matrix();
    if (t.requires_grad(x)) {
      Mat<T> u = (g.array().rowwise() * gv.row(0).array()).matrix();
      Eigen::Matrix<T, Eigen::Dynamic, 1> ux = (u.array() * xv.array()).rowwise().sum();
      Eigen::Matrix<T, Eigen::Dynamic, 1> coef = inv.array().cube() * ux.array() / T(n);
      t.grad(x).array() += u.array().colwise() * inv.array() - xv.array().colwise() * coef.array();
    }
  });
}

/// RMS normalization of each column (feature axis = rows), gain: C x 1.
/// Used on channel-major feature maps [C, H*W].
template <typename T>
Var<T> rms_norm_cols(Var<T> x, Var<T> gain, T eps) {
  auto& t = *x.tape;
  const auto& xv = x.value();
  if (gain.cols() != 1 || gain.rows() != xv.rows()) throw ConfigError("rms_norm_cols: gain shape mismatch");
  const Eigen::Index n = xv.rows();
  Eigen::Matrix<T, 1, Eigen::Dynamic> inv = ((xv.array().square().colwise().sum() / T(n)) + eps).rsqrt();
  Mat<T> out = (xv.array().rowwise() * inv.array()).matrix();
  out.array().colwise() *= gain.value().col(0).array();
  if (!t.needs_grad({x, gain})) return t.constant(std::move(out));
  return t.record(std::move(out), {x, gain}, [x, gain, inv = std::move(inv), n](Tape<T>& t, const Mat<T>& g) {
    const auto& xv = t.value(x);
    const auto& gv = t.value(gain);
    if (t.requires_grad(gain)) t.grad(gain) += (g.array() * (xv.array().rowwise() * inv.array())).rowwise().sum().matrix();
    if (t.requires_grad(x)) {
      Mat<T> u = (g.array().colwise() * gv.col(0).array()).matrix();
      Eigen::Matrix<T, 1, Eigen::Dynamic> ux = (u.array() * xv.array()).colwise().sum();
      Eigen::Matrix<T, 1, Eigen::Dynamic> coef = inv.array().cube() * ux.array() / T(n);
      t.grad(x).array() += u.array().rowwise() * inv.array() - xv.array().rowwise() * coef.array();
    }
  });
}

struct ConvGeometry {
  Eigen::Index in_channels, height, width;
  Eigen::Index kernel, stride, pad;
  Eigen::Index out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  Eigen::Index out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

namespace detail {
template <typename T>
Mat<T> im2col(const Mat<T>& x, const ConvGeometry& g) {
  const Eigen::Index ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  Mat<T> cols = Mat<T>::Zero(g.in_channels * k * k, ho * wo);
  for (Eigen::Index c = 0; c < g.in_channels; ++c)
    for (Eigen::Index ky = 0; ky < k; ++ky)
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        T* row = cols.row((c * k + ky) * k + kx).data();
        const T* plane = x.row(c).data();
        for (Eigen::Index oy = 0; oy < ho; ++oy) {
          const Eigen::Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (Eigen::Index ox = 0; ox < wo; ++ox) {
            const Eigen::Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.width) continue;
            row[oy * wo + ox] = plane[iy * g.width + ix];
          }
        }
      }
  return cols;
}

template <typename T>
void col2im_add(const Mat<T>& cols, const ConvGeometry& g, Mat<T>& dx) {
  const Eigen::Index ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (Eigen::Index c = 0; c < g.in_channels; ++c)
    for (Eigen::Index ky = 0; ky < k; ++ky)
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        const T* row = cols.row((c * k + ky) * k + kx).data();
        T* plane = dx.row(c).data();
        for (Eigen::Index oy = 0; oy < ho; ++oy) {
          const Eigen::Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (Eigen::Index ox = 0; ox < wo; ++ox) {
            const Eigen::Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.width) continue;
            plane[iy * g.width + ix] += row[oy * wo + ox];
          }
        }
      }
}
}  // namespace detail

/// 2D convolution on a channel-major map x: [Cin, H*W].
/// weight: [Cout, Cin*k*k] (input channel outermost, then ky, kx); bias: [Cout, 1].
template <typename T>
Var<T> conv2d(Var<T> x, const ConvGeometry& geo, Var<T> weight, Var<T> bias) {
  auto& t = *x.tape;
  if (x.rows() != geo.in_channels || x.cols() != geo.height * geo.width)
    throw ConfigError("conv2d: input map shape does not match geometry");
  if (weight.cols() != geo.in_channels * geo.kernel * geo.kernel)
    throw ConfigError("conv2d: weight columns do not match in_channels*k*k");
  if (bias.rows() != weight.rows() || bias.cols() != 1) throw ConfigError("conv2d: bias shape mismatch");
  Mat<T> cols = detail::im2col(x.value(), geo);
  Mat<T> out(weight.rows(), cols.cols());
  out.noalias() = weight.value() * cols;
  out.colwise() += bias.value().col(0);
  if (!t.needs_grad({x, weight, bias})) return t.constant(std::move(out));
  return t.record(std::move(out), {x, weight, bias},
                  [x, weight, bias, geo, cols = std::move(cols)](Tape<T>& t, const Mat<T>& g) {
                    if (t.requires_grad(weight)) t.grad(weight).noalias() += g * cols.transpose();
                    if (t.requires_grad(bias)) t.grad(bias) += g.rowwise().sum();
                    if (t.requires_grad(x)) {
                      Mat<T> dcols(cols.rows(), cols.cols());
                      dcols.noalias() = t.value(weight).transpose() * g;
                      detail::col2im_add(dcols, geo, t.grad(x));
                    }
                  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  auto& t = *x.tape;
  Mat<T> out = x.value().transpose();
  return t.record(std::move(out), {x}, [x](Tape<T>& t, const Mat<T>& g) { t.grad(x) += g.transpose(); });
}

/// Reinterprets the row-major buffer with a new shape.
template <typename T>
Var<T> reshape(Var<T> x, Eigen::Index rows, Eigen::Index cols) {
  auto& t = *x.tape;
  if (rows * cols != x.value().size()) throw ConfigError("reshape: element count mismatch");
  Mat<T> out = Eigen::Map<const Mat<T>>(x.value().data(), rows, cols);
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  return t.record(std::move(out), {x}, [x, r0, c0](Tape<T>& t, const Mat<T>& g) {
    t.grad(x) += Eigen::Map<const Mat<T>>(g.data(), r0, c0);
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ConfigError("concat_rows: nothing to concatenate");
  auto& t = *parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ConfigError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat<T> out(rows, cols);
  Eigen::Index r = 0;
  bool needs = false;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    needs = needs || t.needs_grad({p});
  }
  if (!needs) return t.constant(std::move(out));
  return t.record(std::move(out), parts, [parts](Tape<T>& t, const Mat<T>& g) {
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      const Eigen::Index n = t.value(p).rows();
      if (t.requires_grad(p)) t.grad(p) += g.middleRows(r, n);
      r += n;
    }
  });
}

/// Column-wise max over rows: [N, C] -> [1, C]. Ties pick the lowest row.
template <typename T>
Var<T> max_rows(Var<T> x) {
  auto& t = *x.tape;
  const auto& xv = x.value();
  if (xv.rows() == 0) throw InvalidInput("max_rows: empty input");
  Mat<T> out(1, xv.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(xv.cols()), 0);
  for (Eigen::Index c = 0; c < xv.cols(); ++c) out(0, c) = xv(0, c);
  for (Eigen::Index r = 1; r < xv.rows(); ++r)
    for (Eigen::Index c = 0; c < xv.cols(); ++c)
      if (xv(r, c) > out(0, c)) {
        out(0, c) = xv(r, c);
        arg[static_cast<std::size_t>(c)] = r;
      }
  if (!t.needs_grad({x})) return t.constant(std::move(out));
  return t.record(std::move(out), {x}, [x, arg = std::move(arg)](Tape<T>& t, const Mat<T>& g) {
    auto& gx = t.grad(x);
    for (std::size_t c = 0; c < arg.size(); ++c) gx(arg[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
  });
}

/// Multi-head scaled dot-product attention on already projected inputs.
/// q: [N, D], k and v: [M, D]. Heads split the feature axis into D/heads slices.
/// When `weights_out` is given it receives the per-head N x M attention matrices.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, int heads, std::vector<Mat<T>>* weights_out = nullptr) {
  auto& t = *q.tape;
  const Eigen::Index n = q.rows(), m = k.rows(), d = q.cols();
  if (heads <= 0 || d % heads != 0)
    throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  if (k.cols() != d || v.cols() != d || v.rows() != m) throw ConfigError("attention: q/k/v shape mismatch");
  const Eigen::Index dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  const bool needs = t.needs_grad({q, k, v});

  Mat<T> out(n, d);
  std::vector<Mat<T>> probs;
  if (needs || weights_out) probs.reserve(static_cast<std::size_t>(heads));
  Mat<T> p(n, m);
  for (int h = 0; h < heads; ++h) {
    p.noalias() = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    p *= sc;
    for (Eigen::Index r = 0; r < n; ++r) {
      auto row = p.row(r).array();
      row = (row - row.maxCoeff()).exp();
      row /= row.sum();
    }
    out.middleCols(h * dh, dh).noalias() = p * v.value().middleCols(h * dh, dh);
    if (needs || weights_out) probs.push_back(p);
  }
  if (weights_out) *weights_out = probs;
  if (!needs) return t.constant(std::move(out));
  return t.record(std::move(out), {q, k, v}, [q, k, v, heads, dh, sc, probs = std::move(probs)](Tape<T>& t, const Mat<T>& g) {
    const auto& qv = t.value(q);
    const auto& kv = t.value(k);
    const auto& vv = t.value(v);
    const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gv = t.requires_grad(v);
    Mat<T> dp, ds;
    for (int h = 0; h < heads; ++h) {
      const auto& ph = probs[static_cast<std::size_t>(h)];
      const auto go = g.middleCols(h * dh, dh);
      if (gv) t.grad(v).middleCols(h * dh, dh).noalias() += ph.transpose() * go;
      dp.noalias() = go * vv.middleCols(h * dh, dh).transpose();
      Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dp.array() * ph.array()).rowwise().sum();
      ds = (ph.array() * (dp.array().colwise() - rs.array())).matrix() * sc;
      if (gq) t.grad(q).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
      if (gk) t.grad(k).middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
    }
  });
}

}  // namespace i2pref::ag
