// SPDX-License-Identifier: Apache-2.0
//
// Procedural stand-in for a rendered shape dataset: parametric surfaces are
// sampled for ground truth, culled by a half-space for the partial scan and
// sphere-traced for the single-view image.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "i2pref/geometry/point_cloud.hpp"
#include "i2pref/model/image.hpp"

namespace i2pref::train {

enum class ShapeKind { Sphere, Box, Cylinder, Torus };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Torus: return "torus";
  }
  return "sphere";
}

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "box") return ShapeKind::Box;
  if (s == "cylinder") return ShapeKind::Cylinder;
  if (s == "torus") return ShapeKind::Torus;
  throw InvalidInput("unknown shape kind '" + s + "'");
}

/// sphere: {radius}; box: {x, y, z extents}; cylinder: {radius, height};
/// torus: {major radius, minor radius}. Unused entries are ignored.
struct ShapeParams {
  ShapeKind kind = ShapeKind::Sphere;
  std::array<double, 3> dims{1, 1, 1};

  void validate() const {
    auto pos = [](double v) { return std::isfinite(v) && v > 0; };
    switch (kind) {
      case ShapeKind::Sphere:
        if (!pos(dims[0])) throw InvalidInput("sphere radius must be positive");
        break;
      case ShapeKind::Box:
        if (!pos(dims[0]) || !pos(dims[1]) || !pos(dims[2])) throw InvalidInput("box extents must be positive");
        break;
      case ShapeKind::Cylinder:
        if (!pos(dims[0]) || !pos(dims[1])) throw InvalidInput("cylinder radius and height must be positive");
        break;
      case ShapeKind::Torus:
        if (!pos(dims[0]) || !pos(dims[1])) throw InvalidInput("torus radii must be positive");
        if (dims[1] >= dims[0]) throw InvalidInput("torus minor radius must be smaller than the major radius");
        break;
    }
  }
};

/// Camera on the view sphere; it looks at the object center.
struct View {
  double azimuth = 0;    // radians
  double elevation = 0;  // radians

  /// Unit vector from the object center toward the camera.
  Vec3<double> to_camera() const {
    return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
  }
  /// Viewing direction (camera -> object).
  Vec3<double> direction() const {
    const auto u = to_camera();
    return {-u[0], -u[1], -u[2]};
  }
};

inline constexpr int kViewsPerObject = 24;

/// Discrete view ring: 15 degree azimuth steps, elevation alternating +-25 degrees.
inline View view_from_id(int view_id) {
  const double deg = std::numbers::pi / 180.0;
  return {view_id * 15.0 * deg, (view_id % 2 == 0 ? 25.0 : -25.0) * deg};
}

struct SynthConfig {
  int n_points = 512;
  int image_height = 32;
  int image_width = 32;
  /// Upper bound on the norm of the jitter added to re-padded partial points.
  double jitter = 1e-3;
};

struct TrainSample {
  ImageTensor image;
  BasicPointCloud<float> partial;
  BasicPointCloud<float> gt;
  std::string category;
  int view_id = 0;
  std::uint64_t seed = 0;
  /// Object-space -> normalized-space transform applied to both clouds.
  Normalization<double> normalization;
  /// Partial points that are not re-padding duplicates.
  std::size_t n_visible = 0;
};

namespace detail {

inline Vec3<double> add(const Vec3<double>& a, const Vec3<double>& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3<double> mul(const Vec3<double>& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3<double>& a, const Vec3<double>& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3<double> cross(const Vec3<double>& a, const Vec3<double>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3<double> unit(const Vec3<double>& a) { return mul(a, 1.0 / std::sqrt(dot(a, a))); }

/// One area-uniform sample on the surface of the shape (centered at the origin,
/// axis along z for cylinder and torus).
inline Vec3<double> surface_point(const ShapeParams& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double two_pi = 2 * std::numbers::pi;
  switch (s.kind) {
    case ShapeKind::Sphere: {
      std::normal_distribution<double> n(0.0, 1.0);
      Vec3<double> v{n(rng), n(rng), n(rng)};
      double len = std::sqrt(dot(v, v));
      while (len < 1e-12) {
        v = {n(rng), n(rng), n(rng)};
        len = std::sqrt(dot(v, v));
      }
      return mul(v, s.dims[0] / len);
    }
    case ShapeKind::Box: {
      const double a = s.dims[0], b = s.dims[1], c = s.dims[2];
      const double areas[3] = {b * c, a * c, a * b};  // faces normal to x, y, z (two each)
      const double pick = u01(rng) * (areas[0] + areas[1] + areas[2]);
      const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
      const double sign = u01(rng) < 0.5 ? -1.0 : 1.0;
      Vec3<double> p{(u01(rng) - 0.5) * a, (u01(rng) - 0.5) * b, (u01(rng) - 0.5) * c};
      p[static_cast<std::size_t>(axis)] = sign * 0.5 * s.dims[static_cast<std::size_t>(axis)];
      return p;
    }
    case ShapeKind::Cylinder: {
      const double r = s.dims[0], h = s.dims[1];
      const double side = two_pi * r * h, cap = std::numbers::pi * r * r;
      const double pick = u01(rng) * (side + 2 * cap);
      const double phi = two_pi * u01(rng);
      if (pick < side) return {r * std::cos(phi), r * std::sin(phi), (u01(rng) - 0.5) * h};
      const double rad = r * std::sqrt(u01(rng));
      return {rad * std::cos(phi), rad * std::sin(phi), pick < side + cap ? 0.5 * h : -0.5 * h};
    }
    case ShapeKind::Torus: {
      const double big = s.dims[0], small = s.dims[1];
      // Area element is proportional to (R + r cos v); rejection-sample v.
      double v = 0;
      for (;;) {
        v = two_pi * u01(rng);
        if (u01(rng) * (big + small) <= big + small * std::cos(v)) break;
      }
      const double phi = two_pi * u01(rng);
      const double ring = big + small * std::cos(v);
      return {ring * std::cos(phi), ring * std::sin(phi), small * std::sin(v)};
    }
  }
  return {0, 0, 0};
}

/// Signed distance in object space.
inline double sdf(const ShapeParams& s, const Vec3<double>& p) {
  switch (s.kind) {
    case ShapeKind::Sphere: return std::sqrt(dot(p, p)) - s.dims[0];
    case ShapeKind::Box: {
      Vec3<double> q{std::abs(p[0]) - 0.5 * s.dims[0], std::abs(p[1]) - 0.5 * s.dims[1], std::abs(p[2]) - 0.5 * s.dims[2]};
      const Vec3<double> qp{std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
      return std::sqrt(dot(qp, qp)) + std::min(std::max({q[0], q[1], q[2]}), 0.0);
    }
    case ShapeKind::Cylinder: {
      const double dx = std::hypot(p[0], p[1]) - s.dims[0];
      const double dz = std::abs(p[2]) - 0.5 * s.dims[1];
      return std::min(std::max(dx, dz), 0.0) + std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
    }
    case ShapeKind::Torus: return std::hypot(std::hypot(p[0], p[1]) - s.dims[0], p[2]) - s.dims[1];
  }
  return 1.0;
}

inline float quantize8(double v) {
  const long k = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<float>(k) / 255.f;
}

}  // namespace detail

/// Area-weighted surface samples in object space.
inline PointCloud sample_surface(const ShapeParams& shape, int n, std::uint64_t seed) {
  shape.validate();
  if (n <= 0) throw InvalidInput("sample_surface: point count must be positive");
  std::mt19937_64 rng(seed);
  PointCloud c;
  c.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) c.push_back(detail::surface_point(shape, rng));
  return c;
}

/// Orthographic sphere-traced render of the normalized shape. The image plane
/// spans [-1, 1]^2 in normalized units; hits are shaded by depth, background is 0.
inline ImageTensor render_silhouette(const ShapeParams& shape, const Normalization<double>& norm, const View& view,
                                     int height, int width) {
  using namespace detail;
  const auto d = view.direction();
  Vec3<double> right = cross(d, {0, 0, 1});
  if (dot(right, right) < 1e-12) right = {0, 1, 0};
  right = unit(right);
  const Vec3<double> up = unit(cross(right, d));

  ImageTensor img(height, width, 0.f);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double s = (x + 0.5) / width * 2 - 1;
      const double t = 1 - (y + 0.5) / height * 2;
      const Vec3<double> origin = add(add(mul(right, s), mul(up, t)), mul(d, -2.0));
      double travel = 0;
      bool hit = false;
      for (int step = 0; step < 256 && travel < 4.0; ++step) {
        const auto q = add(origin, mul(d, travel));
        const double dist = sdf(shape, norm.invert(q)) / norm.scale;
        if (dist < 1e-5) {
          hit = true;
          break;
        }
        travel += dist;
      }
      if (!hit) continue;
      // travel is about 1 at the front of the unit ball and 3 at its back.
      const float v = quantize8(std::clamp(1.0 - 0.35 * (travel - 1.0), 0.2, 1.0));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  return img;
}

/// Builds one sample: normalized ground truth, the camera-facing half re-padded
/// to the full count with small jitter, and the matching rendered view.
inline TrainSample synth_sample(const ShapeParams& shape, int view_id, std::uint64_t seed, const SynthConfig& cfg) {
  shape.validate();
  if (cfg.n_points <= 0) throw InvalidInput("synth_sample: n_points must be positive");
  if (cfg.image_height <= 0 || cfg.image_width <= 0) throw InvalidInput("synth_sample: image size must be positive");
  const View view = view_from_id(view_id);
  const PointCloud object = sample_surface(shape, cfg.n_points, seed);
  const auto normalized = normalize(object.span());
  const auto& tf = normalized.transform;

  TrainSample s;
  s.category = to_string(shape.kind);
  s.view_id = view_id;
  s.seed = seed;
  s.normalization = tf;
  s.gt = normalized.cloud.cast<float>();

  const auto dir = view.direction();
  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < object.size(); ++i)
    if (detail::dot(object[i], dir) <= 0) visible.push_back(i);
  if (visible.empty()) throw InvalidInput("synth_sample: no camera-facing points");
  s.n_visible = visible.size();

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const double half = cfg.jitter / std::sqrt(3.0);
  std::uniform_real_distribution<double> jit(-half, half);
  std::uniform_int_distribution<std::size_t> pick(0, visible.size() - 1);
  s.partial.reserve(static_cast<std::size_t>(cfg.n_points));
  for (std::size_t i : visible) s.partial.push_back(s.gt[i]);
  while (s.partial.size() < static_cast<std::size_t>(cfg.n_points)) {
    const auto p = s.gt[visible[pick(rng)]];
    s.partial.push_back({static_cast<float>(p[0] + jit(rng)), static_cast<float>(p[1] + jit(rng)),
                         static_cast<float>(p[2] + jit(rng))});
  }
  s.image = render_silhouette(shape, tf, view, cfg.image_height, cfg.image_width);
  return s;
}

/// Random shape parameters for a category, with sizes spread enough that the
/// image carries real information about the missing half.
inline ShapeParams random_shape(ShapeKind kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ShapeParams s{kind, {1, 1, 1}};
  switch (kind) {
    case ShapeKind::Sphere: s.dims = {0.5 + u(rng), 0, 0}; break;
    case ShapeKind::Box: s.dims = {0.4 + 1.2 * u(rng), 0.4 + 1.2 * u(rng), 0.4 + 1.2 * u(rng)}; break;
    case ShapeKind::Cylinder: s.dims = {0.3 + 0.7 * u(rng), 0.5 + 1.5 * u(rng), 0}; break;
    case ShapeKind::Torus: s.dims = {1.0, 0.15 + 0.35 * u(rng), 0}; break;
  }
  return s;
}

}  // namespace i2pref::train
