// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "i2pref/model/image.hpp"
#include "i2pref/model/layers.hpp"

namespace i2pref::model {

struct EncoderConfig {
  int image_height = 32;
  int image_width = 32;
  std::vector<int> stage_channels{32, 64, 128};
  std::vector<int> heads_per_stage{4, 4, 4};
  int bottleneck_blocks = 2;
  int stem_kernel = 7;
  bool positional_embedding = true;

  int stages() const { return static_cast<int>(stage_channels.size()); }
  int token_width() const { return stage_channels.back(); }
  int grid_height() const { return image_height >> stages(); }
  int grid_width() const { return image_width >> stages(); }
  int token_count() const { return grid_height() * grid_width(); }

  void validate() const {
    if (stage_channels.empty()) throw ConfigError("encoder.stage_channels: at least one stage is required");
    if (heads_per_stage.size() != stage_channels.size())
      throw ConfigError("encoder.heads_per_stage: expected one head count per stage");
    for (std::size_t i = 0; i < stage_channels.size(); ++i) {
      const std::string at = "[" + std::to_string(i) + "]";
      if (stage_channels[i] <= 0) throw ConfigError("encoder.stage_channels" + at + ": must be positive");
      if (i > 0 && stage_channels[i] < stage_channels[i - 1])
        throw ConfigError("encoder.stage_channels" + at + ": widths must be nondecreasing");
      if (heads_per_stage[i] <= 0 || stage_channels[i] % heads_per_stage[i] != 0)
        throw ConfigError("encoder.heads_per_stage" + at + ": must divide the stage width");
    }
    if (bottleneck_blocks < 0) throw ConfigError("encoder.bottleneck_blocks: must be >= 0");
    if (stem_kernel <= 0 || stem_kernel % 2 == 0) throw ConfigError("encoder.stem_kernel: must be a positive odd integer");
    const int div = 1 << stages();
    if (image_height <= 0 || image_width <= 0 || image_height % div != 0 || image_width % div != 0)
      throw ConfigError("encoder.image_size: " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                        " is not divisible by 2^" + std::to_string(stages()));
  }
};

/// Flattened encoder output: tokens is [grid_h * grid_w, C].
template <typename T>
struct ImageTokens {
  Var<T> tokens;
  int grid_height = 0;
  int grid_width = 0;

  Eigen::Index count() const { return tokens.rows(); }
  Eigen::Index width() const { return tokens.cols(); }
};

/// Pre-norm residual block: x + conv(silu(norm(conv(silu(norm(x)))))), with a
/// 1x1 projection on the skip path when the width changes. The second conv is
/// zero-initialized so a fresh block is the (projected) identity.
template <typename T>
struct ResNetBlock {
  RMSNorm<T> norm1;
  Conv2d<T> conv1;
  RMSNorm<T> norm2;
  Conv2d<T> conv2;
  std::optional<Conv2d<T>> skip;

  ResNetBlock() = default;
  ResNetBlock(ParameterStore<T>& ps, const std::string& name, int in, int out, Rng& rng)
      : norm1(ps, name + ".norm1", in, true),
        conv1(ps, name + ".conv1", in, out, 3, 1, rng),
        norm2(ps, name + ".norm2", out, true),
        conv2(ps, name + ".conv2", out, out, 3, 1, rng, Init::Zero) {
    if (in != out) skip = Conv2d<T>(ps, name + ".skip", in, out, 1, 1, rng);
  }

  int in_channels() const { return conv1.in_channels; }
  int out_channels() const { return conv2.out_channels; }

  FeatureMap<T> operator()(Tape<T>& t, const FeatureMap<T>& x) const {
    if (x.channels != in_channels())
      throw ConfigError("resnet_block: expected " + std::to_string(in_channels()) + " channels, got " +
                        std::to_string(x.channels));
    FeatureMap<T> h{ag::silu(norm1(t, x.data)), x.channels, x.height, x.width};
    h = conv1(t, h);
    h.data = ag::silu(norm2(t, h.data));
    h = conv2(t, h);
    const Var<T> base = skip ? (*skip)(t, x).data : x.data;
    return {ag::add(base, h.data), h.channels, h.height, h.width};
  }
};

/// Pre-norm self-attention over the flattened spatial positions with a
/// residual connection. Accepts channel-major maps or token rows.
template <typename T>
struct SpatialSelfAttention {
  RMSNorm<T> norm;
  MultiHeadAttention<T> attn;

  SpatialSelfAttention() = default;
  SpatialSelfAttention(ParameterStore<T>& ps, const std::string& name, int width, int heads, Rng& rng)
      : norm(ps, name + ".norm", width, false), attn(ps, name + ".attn", width, width, heads, rng, Init::Zero) {}

  /// tokens: [N, C].
  Var<T> on_tokens(Tape<T>& t, Var<T> tokens, std::vector<Mat<T>>* weights = nullptr) const {
    auto h = norm(t, tokens);
    return ag::add(tokens, attn(t, h, h, weights));
  }

  FeatureMap<T> operator()(Tape<T>& t, const FeatureMap<T>& x) const {
    auto tokens = ag::transpose(x.data);
    return {ag::transpose(on_tokens(t, tokens)), x.channels, x.height, x.width};
  }
};

/// U-Net style contracting encoder: stem convolution, then per stage two
/// residual blocks, self-attention and a stride-2 convolution, then bottleneck
/// residual+attention pairs. The final map is flattened to tokens.
template <typename T>
class ImageEncoder {
 public:
  struct Stage {
    ResNetBlock<T> res0, res1;
    SpatialSelfAttention<T> attn;
    Conv2d<T> down;
  };
  struct BottleneckBlock {
    ResNetBlock<T> res;
    SpatialSelfAttention<T> attn;
  };

  ImageEncoder() = default;
  ImageEncoder(ParameterStore<T>& ps, const EncoderConfig& cfg, Rng& rng, const std::string& name = "encoder")
      : cfg_(cfg) {
    cfg.validate();
    const int c0 = cfg.stage_channels.front();
    stem_ = Conv2d<T>(ps, name + ".stem", 3, c0, cfg.stem_kernel, 1, rng);
    int in = c0;
    for (int s = 0; s < cfg.stages(); ++s) {
      const std::string p = name + ".stage" + std::to_string(s);
      const int c = cfg.stage_channels[static_cast<std::size_t>(s)];
      const int heads = cfg.heads_per_stage[static_cast<std::size_t>(s)];
      Stage st;
      st.res0 = ResNetBlock<T>(ps, p + ".res0", in, c, rng);
      st.res1 = ResNetBlock<T>(ps, p + ".res1", c, c, rng);
      st.attn = SpatialSelfAttention<T>(ps, p + ".attn", c, heads, rng);
      st.down = Conv2d<T>(ps, p + ".down", c, c, 3, 2, rng);
      stages_.push_back(std::move(st));
      in = c;
    }
    for (int b = 0; b < cfg.bottleneck_blocks; ++b) {
      const std::string p = name + ".bottleneck" + std::to_string(b);
      BottleneckBlock bb;
      bb.res = ResNetBlock<T>(ps, p + ".res", in, in, rng);
      bb.attn = SpatialSelfAttention<T>(ps, p + ".attn", in, cfg.heads_per_stage.back(), rng);
      bottleneck_.push_back(std::move(bb));
    }
    if (cfg.positional_embedding) {
      Mat<T> pos(cfg.token_count(), in);
      std::normal_distribution<double> nd(0.0, 0.02);
      for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = static_cast<T>(nd(rng));
      pos_ = &ps.add(name + ".pos_embed", std::move(pos));
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  ImageTokens<T> operator()(Tape<T>& t, const ImageTensor& image) const {
    if (image.height != cfg_.image_height || image.width != cfg_.image_width)
      throw ConfigError("encode_image: image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        " but the encoder expects " + std::to_string(cfg_.image_height) + "x" +
                        std::to_string(cfg_.image_width));
    FeatureMap<T> x{t.constant(image.channel_major<T>()), 3, image.height, image.width};
    x = stem_(t, x);
    ag::check_finite(x.data, "encoder stem");
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const auto& st = stages_[s];
      x = st.res0(t, x);
      x = st.res1(t, x);
      x = st.attn(t, x);
      x = st.down(t, x);
      ag::check_finite(x.data, "encoder stage " + std::to_string(s));
    }
    for (const auto& bb : bottleneck_) {
      x = bb.res(t, x);
      x = bb.attn(t, x);
    }
    ag::check_finite(x.data, "encoder bottleneck");
    auto tokens = ag::transpose(x.data);
    if (pos_) tokens = ag::add(tokens, t.parameter(*pos_));
    return {tokens, static_cast<int>(x.height), static_cast<int>(x.width)};
  }

  const std::vector<Stage>& stages() const { return stages_; }

 private:
  EncoderConfig cfg_;
  Conv2d<T> stem_;
  std::vector<Stage> stages_;
  std::vector<BottleneckBlock> bottleneck_;
  Parameter<T>* pos_ = nullptr;
};

}  // namespace i2pref::model
