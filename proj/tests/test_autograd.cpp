// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace i2pref;
using namespace i2pref::testing;

namespace {

constexpr double kTol = 1e-3;

/// Weighted sum with fixed random weights: a scalar that depends on every
/// output entry differently.
Var<double> probe(Tape<double>& t, Var<double> y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = t.constant(random_mat(y.rows(), y.cols(), rng));
  return ag::sum(t.record(y.value().cwiseProduct(w.value()), {y},
                          [y, wv = w.value()](Tape<double>& tp, const Mat<double>& g) { tp.grad(y) += g.cwiseProduct(wv); }));
}

struct Inputs {
  ag::ParameterStore<double> ps;
  std::mt19937_64 rng{123};
  ag::Parameter<double>& add(const std::string& name, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    return ps.add(name, random_mat(r, c, rng, scale));
  }
};

}  // namespace

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape<double> t;
  auto c = t.constant(Mat<double>::Ones(2, 2));
  auto s = ag::sum(c);
  EXPECT_FALSE(t.requires_grad(s));
}

TEST(Tape, NoGradModeRecordsValuesOnly) {
  Inputs in;
  auto& w = in.add("w", 2, 2);
  Tape<double> t(false);
  auto s = ag::sum(t.parameter(w));
  EXPECT_FALSE(t.requires_grad(s));
  EXPECT_THROW(t.backward(s), InvalidInput);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  Inputs in;
  auto& w = in.add("w", 1, 3);
  Tape<double> t;
  auto x = t.parameter(w);
  t.backward(ag::sum(ag::add(x, x)));
  EXPECT_TRUE(w.grad.isApprox(Mat<double>::Constant(1, 3, 2.0)));
}

TEST(Ops, AddScaleSum) {
  Inputs in;
  auto& a = in.add("a", 3, 4);
  auto& b = in.add("b", 3, 4);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    return probe(t, ag::scale(ag::add(t.parameter(a), t.parameter(b)), 1.7));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, Linear) {
  Inputs in;
  auto& x = in.add("x", 5, 4);
  auto& w = in.add("w", 4, 3);
  auto& b = in.add("b", 1, 3);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    return probe(t, ag::linear(t.parameter(x), t.parameter(w), t.parameter(b)));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, SiluAndTanh) {
  Inputs in;
  auto& x = in.add("x", 4, 5, 2.0);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) { return probe(t, ag::tanh(ag::silu(t.parameter(x)))); });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, RmsNormRowsAndCols) {
  Inputs in;
  auto& x = in.add("x", 4, 6);
  auto& gr = in.add("gain_rows", 1, 6);
  auto& gc = in.add("gain_cols", 4, 1);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    auto a = ag::rms_norm_rows(t.parameter(x), t.parameter(gr), 1e-6);
    auto b = ag::rms_norm_cols(t.parameter(x), t.parameter(gc), 1e-6);
    return ag::add(probe(t, a, 1), probe(t, b, 2));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, RmsNormNormalizesRows) {
  Tape<double> t;
  Mat<double> x(1, 2);
  x << 3, 4;
  auto y = ag::rms_norm_rows(t.constant(x), t.constant(Mat<double>::Ones(1, 2)), 0.0);
  const double rms = std::sqrt((9.0 + 16.0) / 2.0);
  EXPECT_NEAR(y.value()(0, 0), 3 / rms, 1e-15);
  EXPECT_NEAR(y.value()(0, 1), 4 / rms, 1e-15);
}

TEST(Ops, Conv2dMatchesDirectLoop) {
  std::mt19937_64 rng(3);
  const ag::ConvGeometry g{2, 5, 6, 3, 2, 1};
  Mat<double> x = random_mat(2, 30, rng), w = random_mat(3, 18, rng), b = random_mat(3, 1, rng);
  Tape<double> t;
  auto y = ag::conv2d(t.constant(x), g, t.constant(w), t.constant(b));
  ASSERT_EQ(y.rows(), 3);
  ASSERT_EQ(y.cols(), g.out_height() * g.out_width());
  for (int co = 0; co < 3; ++co)
    for (Eigen::Index oy = 0; oy < g.out_height(); ++oy)
      for (Eigen::Index ox = 0; ox < g.out_width(); ++ox) {
        double acc = b(co, 0);
        for (int ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const Eigen::Index iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
              acc += w(co, (ci * 3 + ky) * 3 + kx) * x(ci, iy * 6 + ix);
            }
        EXPECT_NEAR(y.value()(co, oy * g.out_width() + ox), acc, 1e-12);
      }
}

TEST(Ops, Conv2dGradient) {
  Inputs in;
  const ag::ConvGeometry g{2, 5, 4, 3, 1, 1};
  auto& x = in.add("x", 2, 20);
  auto& w = in.add("w", 3, 18);
  auto& b = in.add("b", 3, 1);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    return probe(t, ag::conv2d(t.parameter(x), g, t.parameter(w), t.parameter(b)));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, StridedConvGradient) {
  Inputs in;
  const ag::ConvGeometry g{2, 6, 6, 3, 2, 1};
  auto& x = in.add("x", 2, 36);
  auto& w = in.add("w", 2, 18);
  auto& b = in.add("b", 2, 1);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    return probe(t, ag::conv2d(t.parameter(x), g, t.parameter(w), t.parameter(b)));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, TransposeReshapeConcat) {
  Inputs in;
  auto& a = in.add("a", 2, 6);
  auto& b = in.add("b", 3, 3);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    auto r = ag::reshape(ag::transpose(t.parameter(a)), 4, 3);
    return probe(t, ag::concat_rows<double>({r, t.parameter(b)}));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, MaxRowsPicksLowestRowOnTies) {
  Tape<double> t;
  Mat<double> x(3, 2);
  x << 1, 5, 4, 5, 4, 0;
  auto m = ag::max_rows(t.constant(x));
  EXPECT_EQ(m.value()(0, 0), 4);
  EXPECT_EQ(m.value()(0, 1), 5);
}

TEST(Ops, MaxRowsGradient) {
  Inputs in;
  auto& x = in.add("x", 6, 4);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) { return probe(t, ag::max_rows(t.parameter(x))); });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, AttentionMatchesNaiveSoftmax) {
  std::mt19937_64 rng(17);
  Mat<double> q = random_mat(3, 4, rng), k = random_mat(5, 4, rng), v = random_mat(5, 4, rng);
  Tape<double> t;
  std::vector<Mat<double>> weights;
  auto y = ag::attention(t.constant(q), t.constant(k), t.constant(v), 2, &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (int h = 0; h < 2; ++h)
    for (int i = 0; i < 3; ++i) {
      std::vector<double> s(5);
      double z = 0;
      for (int j = 0; j < 5; ++j) {
        s[j] = std::exp((q(i, 2 * h) * k(j, 2 * h) + q(i, 2 * h + 1) * k(j, 2 * h + 1)) / std::sqrt(2.0));
        z += s[j];
      }
      for (int c = 0; c < 2; ++c) {
        double acc = 0;
        for (int j = 0; j < 5; ++j) acc += s[j] / z * v(j, 2 * h + c);
        EXPECT_NEAR(y.value()(i, 2 * h + c), acc, 1e-12);
      }
      for (int j = 0; j < 5; ++j) EXPECT_NEAR(weights[h](i, j), s[j] / z, 1e-12);
    }
}

TEST(Ops, AttentionGradient) {
  Inputs in;
  auto& q = in.add("q", 3, 6);
  auto& k = in.add("k", 4, 6);
  auto& v = in.add("v", 4, 6);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) {
    return probe(t, ag::attention(t.parameter(q), t.parameter(k), t.parameter(v), 3));
  });
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}

TEST(Ops, CheckFiniteThrows) {
  Tape<double> t;
  auto x = t.constant(Mat<double>::Constant(1, 1, std::numeric_limits<double>::infinity()));
  EXPECT_THROW(ag::check_finite(x, "test"), NumericalFailure);
}

TEST(Chamfer, DifferentiableValueMatchesMetric) {
  std::mt19937_64 rng(21);
  auto a = random_cloud(37, rng), b = random_cloud(50, rng);
  Tape<double> t;
  auto d = ag::chamfer(t.constant(Eigen::Map<const Mat<double>>(a.data(), 37, 3)),
                       t.constant(Eigen::Map<const Mat<double>>(b.data(), 50, 3)));
  EXPECT_EQ(d.value()(0, 0), chamfer_distance(a.span(), b.span()));
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  Inputs in;
  auto& p = in.add("p", 20, 3);
  auto& g = in.add("g", 31, 3);
  auto rep = grad_check(in.ps, [&](Tape<double>& t) { return ag::chamfer(t.parameter(p), t.parameter(g)); }, 1e-4, 60);
  EXPECT_LT(rep.max_rel_error, kTol) << rep.worst;
}
