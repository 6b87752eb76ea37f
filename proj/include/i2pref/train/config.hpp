// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: JSON file <-> structs, with validation that reports the
// offending field path.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "i2pref/geometry/metrics.hpp"
#include "i2pref/model/pipeline.hpp"
#include "i2pref/train/dataset.hpp"
#include "i2pref/train/schedule.hpp"

namespace i2pref::train {

using json = nlohmann::json;

struct TrainSettings {
  int epochs = 300;
  int batch_size = 8;
  double lr = 1e-3;
  double grad_clip = 1.0;
  double alpha_start = 0.7;
  double alpha_end = 0.1;
  model::Variant variant = model::Variant::Full;
  std::uint64_t seed = 0;
  /// Validation frequency in epochs; the last epoch is always validated.
  int val_every = 1;

  LossSchedule schedule() const { return {alpha_start, alpha_end, epochs}; }
};

struct RunConfig {
  model::ModelConfig model;
  TrainSettings train;
  DatasetSpec data;
  std::string dataset_dir = "data";
  double tau = kDefaultFscoreTau;
  std::string output_dir = "out";

  /// Keeps the dataset generator consistent with the model input sizes.
  void sync_data() {
    data.synth.n_points = model.n_input;
    data.synth.image_height = model.encoder.image_height;
    data.synth.image_width = model.encoder.image_width;
  }
};

inline std::string sampling_name(SamplingMode m) { return m == SamplingMode::FarthestPoint ? "fps" : "uniform"; }

inline json to_json(const model::ModelConfig& m) {
  return json{
      {"encoder",
       {{"image_height", m.encoder.image_height},
        {"image_width", m.encoder.image_width},
        {"stage_channels", m.encoder.stage_channels},
        {"heads_per_stage", m.encoder.heads_per_stage},
        {"bottleneck_blocks", m.encoder.bottleneck_blocks},
        {"stem_kernel", m.encoder.stem_kernel},
        {"positional_embedding", m.encoder.positional_embedding}}},
      {"generator",
       {{"n_branches", m.generator.n_branches},
        {"points_per_branch", m.generator.points_per_branch},
        {"latent_width", m.generator.latent_width}}},
      {"refiner",
       {{"n_stages", m.refiner.n_stages},
        {"embed_width", m.refiner.embed_width},
        {"heads", m.refiner.heads},
        {"ffn_width", m.refiner.ffn_width},
        {"share_offset_heads", m.refiner.share_offset_heads}}},
      {"points", {{"n_input", m.n_input}, {"keep", m.keep}, {"sampling", sampling_name(m.sampling)}}}};
}

inline json to_json(const RunConfig& c) {
  json cats = json::array();
  for (auto k : c.data.categories) cats.push_back(to_string(k));
  return json{{"model", to_json(c.model)},
              {"train",
               {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"grad_clip", c.train.grad_clip},
                {"alpha_start", c.train.alpha_start},
                {"alpha_end", c.train.alpha_end},
                {"variant", model::to_string(c.train.variant)},
                {"seed", c.train.seed},
                {"val_every", c.train.val_every}}},
              {"data",
               {{"categories", cats},
                {"train_per_category", c.data.train_per_category},
                {"val_per_category", c.data.val_per_category},
                {"test_per_category", c.data.test_per_category},
                {"seed", c.data.seed},
                {"dir", c.dataset_dir}}},
              {"eval", {{"tau", c.tau}}},
              {"output_dir", c.output_dir}};
}

namespace detail {

/// Walks one JSON object, rejecting unknown keys and reporting type errors
/// with their full path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename V>
  void read(const std::string& key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<V>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<V, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<V>();
    } catch (const std::exception&) {
      throw ConfigError(field(key) + ": wrong type (got " + std::string(it->type_name()) + ")");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path + ": " + msg);
}

}  // namespace detail

inline model::ModelConfig model_config_from_json(const json& j, const std::string& path = "model") {
  model::ModelConfig m;
  detail::ObjectReader r(j, path);
  if (const json* e = r.child("encoder")) {
    detail::ObjectReader er(*e, r.field("encoder"));
    er.read("image_height", m.encoder.image_height);
    er.read("image_width", m.encoder.image_width);
    er.read("stage_channels", m.encoder.stage_channels);
    er.read("heads_per_stage", m.encoder.heads_per_stage);
    er.read("bottleneck_blocks", m.encoder.bottleneck_blocks);
    er.read("stem_kernel", m.encoder.stem_kernel);
    er.read("positional_embedding", m.encoder.positional_embedding);
  }
  if (const json* g = r.child("generator")) {
    detail::ObjectReader gr(*g, r.field("generator"));
    gr.read("n_branches", m.generator.n_branches);
    gr.read("points_per_branch", m.generator.points_per_branch);
    gr.read("latent_width", m.generator.latent_width);
  }
  if (const json* f = r.child("refiner")) {
    detail::ObjectReader fr(*f, r.field("refiner"));
    fr.read("n_stages", m.refiner.n_stages);
    fr.read("embed_width", m.refiner.embed_width);
    fr.read("heads", m.refiner.heads);
    fr.read("ffn_width", m.refiner.ffn_width);
    fr.read("share_offset_heads", m.refiner.share_offset_heads);
  }
  if (const json* p = r.child("points")) {
    detail::ObjectReader pr(*p, r.field("points"));
    pr.read("n_input", m.n_input);
    pr.read("keep", m.keep);
    std::string sampling = sampling_name(m.sampling);
    pr.read("sampling", sampling);
    detail::require(sampling == "fps" || sampling == "uniform", pr.field("sampling"), "expected 'fps' or 'uniform'");
    m.sampling = sampling == "fps" ? SamplingMode::FarthestPoint : SamplingMode::Uniform;
  }
  // Module validators use their own section names; prefix them with the model path.
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.what());
  }
  return m;
}

inline void validate(const RunConfig& c) {
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.") + e.what());
  }
  detail::require(c.train.epochs >= 1, "train.epochs", "must be >= 1");
  detail::require(c.train.batch_size >= 1, "train.batch_size", "must be >= 1");
  detail::require(c.train.lr > 0 && std::isfinite(c.train.lr), "train.lr", "must be positive");
  detail::require(c.train.grad_clip >= 0, "train.grad_clip", "must be >= 0 (0 disables clipping)");
  detail::require(c.train.alpha_start >= 0 && std::isfinite(c.train.alpha_start), "train.alpha_start", "must be >= 0");
  detail::require(c.train.alpha_end >= 0 && std::isfinite(c.train.alpha_end), "train.alpha_end", "must be >= 0");
  detail::require(c.train.val_every >= 1, "train.val_every", "must be >= 1");
  detail::require(!c.data.categories.empty(), "data.categories", "must list at least one shape kind");
  detail::require(c.data.train_per_category >= 0, "data.train_per_category", "must be >= 0");
  detail::require(c.data.val_per_category >= 0, "data.val_per_category", "must be >= 0");
  detail::require(c.data.test_per_category >= 0, "data.test_per_category", "must be >= 0");
  detail::require(c.tau > 0 && std::isfinite(c.tau), "eval.tau", "must be positive");
  detail::require(!c.output_dir.empty(), "output_dir", "must not be empty");
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  detail::ObjectReader r(j, "");
  if (const json* m = r.child("model")) c.model = model_config_from_json(*m, "model");
  if (const json* t = r.child("train")) {
    detail::ObjectReader tr(*t, "train");
    tr.read("epochs", c.train.epochs);
    tr.read("batch_size", c.train.batch_size);
    tr.read("lr", c.train.lr);
    tr.read("grad_clip", c.train.grad_clip);
    tr.read("alpha_start", c.train.alpha_start);
    tr.read("alpha_end", c.train.alpha_end);
    std::string variant = model::to_string(c.train.variant);
    tr.read("variant", variant);
    try {
      c.train.variant = model::parse_variant(variant);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("train.variant: ") + e.what());
    }
    tr.read("seed", c.train.seed);
    tr.read("val_every", c.train.val_every);
  }
  if (const json* d = r.child("data")) {
    detail::ObjectReader dr(*d, "data");
    if (const json* cats = dr.child("categories")) {
      detail::require(cats->is_array(), "data.categories", "expected an array of shape kinds");
      c.data.categories.clear();
      for (std::size_t i = 0; i < cats->size(); ++i) {
        const auto& v = (*cats)[i];
        const std::string at = "data.categories[" + std::to_string(i) + "]";
        detail::require(v.is_string(), at, "expected a string");
        try {
          c.data.categories.push_back(parse_shape_kind(v.get<std::string>()));
        } catch (const InvalidInput& e) {
          throw ConfigError(at + ": " + e.what());
        }
      }
    }
    dr.read("train_per_category", c.data.train_per_category);
    dr.read("val_per_category", c.data.val_per_category);
    dr.read("test_per_category", c.data.test_per_category);
    dr.read("seed", c.data.seed);
    dr.read("dir", c.dataset_dir);
  }
  if (const json* e = r.child("eval")) {
    detail::ObjectReader er(*e, "eval");
    er.read("tau", c.tau);
  }
  r.read("output_dir", c.output_dir);
  c.sync_data();
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

/// Stable hash of the architecture-defining fields.
inline std::uint64_t config_hash(const model::ModelConfig& m) { return fnv1a(to_json(m).dump()); }

}  // namespace i2pref::train
