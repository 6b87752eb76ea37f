// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "i2pref/geometry/sampling.hpp"
#include "i2pref/model/encoder.hpp"

namespace i2pref::model {

struct GeneratorConfig {
  int n_branches = 4;
  int points_per_branch = 64;
  int latent_width = 256;

  int n_generated() const { return n_branches * points_per_branch; }

  void validate() const {
    if (n_branches <= 0) throw ConfigError("generator.n_branches: must be positive");
    if (points_per_branch <= 0) throw ConfigError("generator.points_per_branch: must be positive");
    if (latent_width <= 0) throw ConfigError("generator.latent_width: must be positive");
  }
};

/// Coarse cloud P0 as an N x 3 node plus provenance of every row.
template <typename T>
struct CoarseCompletion {
  Var<T> points;
  std::vector<bool> generated_mask;
  int n_generated = 0;
  int n_partial_kept = 0;
};

/// Global latent from image tokens followed by independent branch decoders.
/// Any module producing an N_g x 3 node from ImageTokens can stand in for it.
template <typename T>
class PointGenerator {
 public:
  PointGenerator() = default;
  PointGenerator(ParameterStore<T>& ps, const GeneratorConfig& cfg, int token_width, Rng& rng,
                 const std::string& name = "generator")
      : cfg_(cfg) {
    cfg.validate();
    const int lw = cfg.latent_width;
    token_proj_ = Linear<T>(ps, name + ".token_proj", token_width, lw, rng);
    latent_mlp_ = Mlp<T>(ps, name + ".latent_mlp", lw, lw, lw, rng);
    for (int b = 0; b < cfg.n_branches; ++b)
      branches_.emplace_back(ps, name + ".branch" + std::to_string(b), lw, lw, 3 * cfg.points_per_branch, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<Mlp<T>>& branches() const { return branches_; }

  /// Shared per-token projection, max-pool over tokens, small MLP -> [1, latent_width].
  Var<T> aggregate_global_latent(Tape<T>& t, Var<T> tokens) const {
    if (tokens.rows() == 0) throw InvalidInput("aggregate_global_latent: no tokens");
    ag::check_finite(tokens, "generator input tokens");
    auto pooled = ag::max_rows(token_proj_(t, tokens));
    auto latent = latent_mlp_(t, pooled);
    ag::check_finite(latent, "generator latent");
    return latent;
  }

  /// Each branch decodes the latent into points_per_branch points; tanh keeps
  /// coordinates in [-1, 1]. Output: [n_generated, 3].
  Var<T> generate_points(Tape<T>& t, Var<T> latent) const {
    if (latent.rows() != 1 || latent.cols() != cfg_.latent_width)
      throw ConfigError("generate_points: latent width " + std::to_string(latent.cols()) + " does not match " +
                        std::to_string(cfg_.latent_width));
    std::vector<Var<T>> parts;
    parts.reserve(branches_.size());
    for (const auto& br : branches_)
      parts.push_back(ag::reshape(ag::tanh(br(t, latent)), cfg_.points_per_branch, 3));
    auto out = ag::concat_rows(parts);
    ag::check_finite(out, "generated points");
    return out;
  }

  Var<T> operator()(Tape<T>& t, Var<T> tokens) const { return generate_points(t, aggregate_global_latent(t, tokens)); }

 private:
  GeneratorConfig cfg_;
  Linear<T> token_proj_;
  Mlp<T> latent_mlp_;
  std::vector<Mlp<T>> branches_;
};

/// Concatenates generated rows with an already selected subset of the partial
/// input and records which rows were generated.
template <typename T>
CoarseCompletion<T> concat_coarse(Tape<T>& t, Var<T> generated, const BasicPointCloud<T>& kept_partial) {
  if (generated.cols() != 3) throw ConfigError("assemble_coarse: generated points must be N x 3");
  const auto ng = static_cast<int>(generated.rows());
  const auto nk = static_cast<int>(kept_partial.size());
  Mat<T> kept = Eigen::Map<const Mat<T>>(kept_partial.data(), nk, 3);
  CoarseCompletion<T> c;
  c.points = nk > 0 ? ag::concat_rows<T>({generated, t.constant(std::move(kept))}) : generated;
  c.generated_mask.assign(static_cast<std::size_t>(ng + nk), false);
  std::fill_n(c.generated_mask.begin(), ng, true);
  c.n_generated = ng;
  c.n_partial_kept = nk;
  return c;
}

/// Selects `keep` points from the partial input (farthest-point by default).
template <typename T>
BasicPointCloud<T> select_partial(PointSpan<T> partial, int keep, std::uint64_t seed,
                                  SamplingMode mode = SamplingMode::FarthestPoint) {
  if (keep < 1 || static_cast<std::size_t>(keep) > partial.size())
    throw InvalidInput("assemble_coarse: keep=" + std::to_string(keep) + " must lie in [1, " +
                       std::to_string(partial.size()) + "]");
  return gather(partial, sample_indices(partial, static_cast<std::size_t>(keep), seed, mode));
}

/// generated ∪ sample(partial, keep, seed).
template <typename T>
CoarseCompletion<T> assemble_coarse(Tape<T>& t, Var<T> generated, PointSpan<T> partial, int keep, std::uint64_t seed,
                                    SamplingMode mode = SamplingMode::FarthestPoint) {
  return concat_coarse(t, generated, select_partial(partial, keep, seed, mode));
}

}  // namespace i2pref::model
