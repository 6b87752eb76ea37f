// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "i2pref/model/encoder.hpp"

namespace i2pref::model {

struct RefinerConfig {
  int n_stages = 4;
  int embed_width = 128;
  int heads = 4;
  int ffn_width = 256;
  bool share_offset_heads = false;

  void validate() const {
    if (n_stages < 1) throw ConfigError("refiner.n_stages: must be >= 1");
    if (embed_width <= 0) throw ConfigError("refiner.embed_width: must be positive");
    if (heads <= 0 || embed_width % heads != 0) throw ConfigError("refiner.heads: must divide refiner.embed_width");
    if (ffn_width <= 0) throw ConfigError("refiner.ffn_width: must be positive");
  }
};

/// P(0) .. P(L) and the offsets between consecutive stages.
template <typename T>
struct RefinementTrace {
  std::vector<Var<T>> stages;
  std::vector<Var<T>> offsets;

  Var<T> final_points() const { return stages.back(); }
};

/// Transformer block on point embeddings: pre-norm self-attention over points,
/// pre-norm cross-attention with image tokens as keys/values, then a
/// pre-norm feed-forward network. Each sub-layer is residual.
template <typename T>
struct RefineBlock {
  RMSNorm<T> norm_self, norm_cross, norm_ffn;
  MultiHeadAttention<T> self_attn, cross_attn;
  Mlp<T> ffn;

  RefineBlock() = default;
  RefineBlock(ParameterStore<T>& ps, const std::string& name, const RefinerConfig& cfg, Rng& rng)
      : norm_self(ps, name + ".norm_self", cfg.embed_width, false),
        norm_cross(ps, name + ".norm_cross", cfg.embed_width, false),
        norm_ffn(ps, name + ".norm_ffn", cfg.embed_width, false),
        self_attn(ps, name + ".self_attn", cfg.embed_width, cfg.embed_width, cfg.heads, rng),
        cross_attn(ps, name + ".cross_attn", cfg.embed_width, cfg.embed_width, cfg.heads, rng),
        ffn(ps, name + ".ffn", cfg.embed_width, cfg.ffn_width, cfg.embed_width, rng) {}

  /// x: [N, D]; context: image tokens already at width D.
  Var<T> operator()(Tape<T>& t, Var<T> x, Var<T> context) const {
    if (context.cols() != x.cols())
      throw ConfigError("refine_block: token width " + std::to_string(context.cols()) +
                        " does not match embedding width " + std::to_string(x.cols()));
    auto h = norm_self(t, x);
    x = ag::add(x, self_attn(t, h, h));
    x = ag::add(x, cross_attn(t, norm_cross(t, x), context));
    x = ag::add(x, ffn(t, norm_ffn(t, x)));
    return x;
  }
};

/// Iterative point-to-point refiner. Embeddings are produced once from the
/// coarse coordinates and carried across stages; every stage predicts an
/// offset that is added to the running coordinates.
template <typename T>
class PointRefiner {
 public:
  PointRefiner() = default;
  PointRefiner(ParameterStore<T>& ps, const RefinerConfig& cfg, int token_width, Rng& rng,
               const std::string& name = "refiner")
      : cfg_(cfg) {
    cfg.validate();
    embed_ = Linear<T>(ps, name + ".embed", 3, cfg.embed_width, rng);
    if (token_width != cfg.embed_width)
      token_proj_ = Linear<T>(ps, name + ".token_proj", token_width, cfg.embed_width, rng);
    for (int l = 0; l < cfg.n_stages; ++l)
      blocks_.emplace_back(ps, name + ".block" + std::to_string(l), cfg, rng);
    const int n_heads = cfg.share_offset_heads ? 1 : cfg.n_stages;
    for (int l = 0; l < n_heads; ++l)
      heads_.emplace_back(ps, name + ".offset" + std::to_string(l), cfg.embed_width, cfg.ffn_width, 3, rng, Init::Zero);
  }

  const RefinerConfig& config() const { return cfg_; }
  const std::vector<RefineBlock<T>>& blocks() const { return blocks_; }
  const std::vector<Mlp<T>>& offset_heads() const { return heads_; }

  /// Per-point affine map 3 -> D.
  Var<T> embed_points(Tape<T>& t, Var<T> coarse) const {
    if (coarse.rows() == 0 || coarse.cols() != 3) throw InvalidInput("embed_points: expected a nonempty N x 3 cloud");
    return embed_(t, coarse);
  }

  /// Image tokens mapped to width D (identity when widths already agree).
  Var<T> project_tokens(Tape<T>& t, Var<T> tokens) const { return token_proj_ ? (*token_proj_)(t, tokens) : tokens; }

  Var<T> refine_block(Tape<T>& t, int stage, Var<T> x, Var<T> context) const {
    return blocks_.at(static_cast<std::size_t>(stage))(t, x, context);
  }

  /// Per-point MLP D -> ffn_width -> 3.
  Var<T> predict_offsets(Tape<T>& t, Var<T> x, int stage) const {
    if (stage < 0 || stage >= cfg_.n_stages)
      throw InvalidInput("predict_offsets: stage " + std::to_string(stage) + " outside [0, " +
                         std::to_string(cfg_.n_stages) + ")");
    const auto& head = heads_[cfg_.share_offset_heads ? 0 : static_cast<std::size_t>(stage)];
    return head(t, x);
  }

  RefinementTrace<T> operator()(Tape<T>& t, Var<T> coarse, Var<T> tokens) const {
    RefinementTrace<T> trace;
    trace.stages.push_back(coarse);
    auto context = project_tokens(t, tokens);
    auto x = embed_points(t, coarse);
    auto points = coarse;
    for (int l = 0; l < cfg_.n_stages; ++l) {
      x = refine_block(t, l, x, context);
      auto delta = predict_offsets(t, x, l);
      points = ag::add(points, delta);
      ag::check_finite(points, "refiner stage " + std::to_string(l));
      trace.offsets.push_back(delta);
      trace.stages.push_back(points);
    }
#ifndef NDEBUG
    for (std::size_t l = 0; l < trace.offsets.size(); ++l) {
      const Mat<T> expect = trace.stages[l].value() + trace.offsets[l].value();
      if (expect != trace.stages[l + 1].value()) throw NumericalFailure("refinement trace is not additive");
    }
#endif
    return trace;
  }

 private:
  RefinerConfig cfg_;
  Linear<T> embed_;
  std::optional<Linear<T>> token_proj_;
  std::vector<RefineBlock<T>> blocks_;
  std::vector<Mlp<T>> heads_;
};

}  // namespace i2pref::model
