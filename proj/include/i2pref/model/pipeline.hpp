// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "i2pref/model/generator.hpp"
#include "i2pref/model/refiner.hpp"

namespace i2pref::model {

/// Wirings used for ablations.
enum class Variant { Full, NoReconLoss, I2POnly, P2POnly };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoReconLoss: return "no-recon";
    case Variant::I2POnly: return "i2p-only";
    case Variant::P2POnly: return "p2p-only";
  }
  return "full";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no-recon") return Variant::NoReconLoss;
  if (s == "i2p-only") return Variant::I2POnly;
  if (s == "p2p-only") return Variant::P2POnly;
  throw ConfigError("unknown variant '" + s + "' (expected full, no-recon, i2p-only or p2p-only)");
}

inline bool has_generator(Variant v) { return v != Variant::P2POnly; }
inline bool has_refiner(Variant v) { return v != Variant::I2POnly; }

struct ModelConfig {
  EncoderConfig encoder;
  GeneratorConfig generator;
  RefinerConfig refiner;
  int n_input = 512;  // points per partial / ground-truth cloud
  int keep = 256;     // partial points kept in the coarse cloud
  SamplingMode sampling = SamplingMode::FarthestPoint;

  int n_coarse() const { return generator.n_generated() + keep; }

  void validate() const {
    encoder.validate();
    generator.validate();
    refiner.validate();
    if (n_input <= 0) throw ConfigError("points.n_input: must be positive");
    if (keep < 1 || keep > n_input) throw ConfigError("points.keep: must lie in [1, points.n_input]");
    if (n_coarse() > n_input)
      throw ConfigError("points: generator.n_generated + keep (" + std::to_string(n_coarse()) +
                        ") exceeds points.n_input (" + std::to_string(n_input) + ")");
  }
};

template <typename T>
struct ForwardResult {
  ImageTokens<T> tokens;
  CoarseCompletion<T> coarse;
  RefinementTrace<T> trace;

  Var<T> final_points() const { return trace.final_points(); }
};

/// Image-to-point generator plus point-to-point refiner behind one forward.
/// The encoder runs once; its tokens feed both the generator and the refiner.
template <typename T>
class CompletionModel {
 public:
  CompletionModel(const ModelConfig& cfg, Variant variant, std::uint64_t seed) : cfg_(cfg), variant_(variant) {
    cfg.validate();
    Rng rng(seed);
    encoder_ = ImageEncoder<T>(params_, cfg.encoder, rng);
    const int tw = cfg.encoder.token_width();
    if (has_generator(variant)) generator_.emplace(params_, cfg.generator, tw, rng);
    if (has_refiner(variant)) refiner_.emplace(params_, cfg.refiner, tw, rng);
  }

  CompletionModel(const CompletionModel&) = delete;
  CompletionModel& operator=(const CompletionModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  const ImageEncoder<T>& encoder() const { return encoder_; }
  const PointGenerator<T>* generator() const { return generator_ ? &*generator_ : nullptr; }
  const PointRefiner<T>* refiner() const { return refiner_ ? &*refiner_ : nullptr; }

  /// Number of partial points this variant consumes per forward.
  int partial_points_needed() const { return has_generator(variant_) ? cfg_.keep : cfg_.n_coarse(); }

  BasicPointCloud<T> prepare_partial(PointSpan<T> partial, std::uint64_t seed) const {
    return select_partial(partial, partial_points_needed(), seed, cfg_.sampling);
  }

  /// Coarse stage only: encode, generate and assemble.
  std::pair<CoarseCompletion<T>, ImageTokens<T>> i2p_forward(Tape<T>& t, const ImageTensor& image,
                                                             const BasicPointCloud<T>& kept_partial) const {
    if (static_cast<int>(kept_partial.size()) != partial_points_needed())
      throw InvalidInput("forward: expected " + std::to_string(partial_points_needed()) + " selected partial points, got " +
                         std::to_string(kept_partial.size()));
    auto tokens = encoder_(t, image);
    CoarseCompletion<T> coarse;
    if (generator_) {
      coarse = concat_coarse(t, (*generator_)(t, tokens.tokens), kept_partial);
    } else {
      const auto n = static_cast<Eigen::Index>(kept_partial.size());
      coarse.points = t.constant(Eigen::Map<const Mat<T>>(kept_partial.data(), n, 3));
      coarse.generated_mask.assign(kept_partial.size(), false);
      coarse.n_partial_kept = static_cast<int>(n);
    }
    return {coarse, tokens};
  }

  ForwardResult<T> forward(Tape<T>& t, const ImageTensor& image, const BasicPointCloud<T>& kept_partial) const {
    auto [coarse, tokens] = i2p_forward(t, image, kept_partial);
    ForwardResult<T> r{tokens, coarse, {}};
    if (refiner_) {
      r.trace = (*refiner_)(t, coarse.points, tokens.tokens);
    } else {
      r.trace.stages.push_back(coarse.points);
    }
    return r;
  }

 private:
  ModelConfig cfg_;
  Variant variant_;
  ParameterStore<T> params_;
  ImageEncoder<T> encoder_;
  std::optional<PointGenerator<T>> generator_;
  std::optional<PointRefiner<T>> refiner_;
};

}  // namespace i2pref::model
