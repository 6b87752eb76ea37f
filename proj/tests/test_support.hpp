// SPDX-License-Identifier: Apache-2.0
// Shared fixtures: small model configurations, random data and the
// finite-difference gradient checker.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "i2pref/i2pref.hpp"

namespace i2pref::testing {

using ag::Mat;
using ag::Tape;
using ag::Var;

/// A model small enough to run forward/backward in milliseconds.
inline model::ModelConfig tiny_model() {
  model::ModelConfig m;
  m.encoder.image_height = 16;
  m.encoder.image_width = 16;
  m.encoder.stage_channels = {8, 16};
  m.encoder.heads_per_stage = {2, 2};
  m.encoder.bottleneck_blocks = 1;
  m.encoder.stem_kernel = 3;
  m.generator = {2, 16, 16};
  m.refiner = {2, 16, 2, 32, false};
  m.n_input = 64;
  m.keep = 32;
  return m;
}

inline train::RunConfig tiny_run(const std::string& out_dir) {
  train::RunConfig c;
  c.model = tiny_model();
  c.train.epochs = 3;
  c.train.batch_size = 4;
  c.data.train_per_category = 2;
  c.data.val_per_category = 1;
  c.data.test_per_category = 1;
  c.output_dir = out_dir;
  c.dataset_dir = out_dir + "/data";
  c.sync_data();
  return c;
}

inline PointCloud random_cloud(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({u(rng), u(rng), u(rng)});
  return c;
}

/// Cloud with coordinates on a small integer lattice, so exact distance ties
/// are common.
inline PointCloud lattice_cloud(std::size_t n, std::mt19937_64& rng, int extent = 3) {
  std::uniform_int_distribution<int> u(-extent, extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({double(u(rng)), double(u(rng)), double(u(rng))});
  return c;
}

inline Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

inline ImageTensor random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  ImageTensor img(h, w);
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

/// Replaces every parameter with Gaussian noise, so zero-initialized layers do
/// not hide gradient paths from the checker.
inline void perturb(ag::ParameterStore<double>& ps, std::mt19937_64& rng, double scale = 0.3) {
  for (auto& p : ps) p->value = random_mat(p->value.rows(), p->value.cols(), rng, scale);
}

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

/// Relative disagreement between an analytic and a numeric derivative.
/// Derivatives whose magnitudes are both below `floor` are compared on the
/// absolute scale of the floor.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares reverse-mode gradients of `loss` against central differences with
/// step h for up to `per_param` randomly chosen entries of every parameter.
inline GradCheckReport grad_check(ag::ParameterStore<double>& ps, const std::function<Var<double>(Tape<double>&)>& loss,
                                  double h = 1e-4, std::size_t per_param = 16, std::uint64_t seed = 7) {
  ps.zero_grad();
  {
    Tape<double> t;
    t.backward(loss(t));
  }
  auto eval = [&] {
    Tape<double> t(false);
    return loss(t).value()(0, 0);
  };
  std::mt19937_64 rng(seed);
  GradCheckReport rep;
  for (auto& p : ps) {
    const auto n = static_cast<std::size_t>(p->value.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, per_param));
    for (std::size_t i : idx) {
      double& x = p->value.data()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = eval();
      x = x0 - h;
      const double fm = eval();
      x = x0;
      const double numeric = (fp - fm) / (2 * h);
      const double analytic = p->grad.data()[i];
      const double err = relative_error(analytic, numeric);
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return rep;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("i2pref_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace i2pref::testing
