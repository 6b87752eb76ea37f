// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the i2pref executable. Every command
// validates its inputs before touching the filesystem and reports failures by
// exception; run_command() maps those onto process exit codes.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "i2pref/cli/svg.hpp"
#include "i2pref/train/trainer.hpp"

namespace i2pref::cli {

namespace fs = std::filesystem;
using train::json;
using train::RunConfig;

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kRuntimeError = 2 };

struct GlobalOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

/// Defaults, then the config file, then command-line overrides.
inline RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig c;
  if (g.config) c = train::load_run_config(*g.config);
  c.sync_data();
  if (g.out) c.output_dir = *g.out;
  train::validate(c);
  return c;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

/// Runs a command body and converts exceptions into exit codes.
inline int run_command(const std::function<int()>& body, std::ostream& err = std::cerr) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

// ---------------------------------------------------------------- gen-data

/// Writes train/val/test splits to --out (or data.dir).
inline int cmd_gen_data(const GlobalOptions& g, std::ostream& log = std::cout) {
  GlobalOptions g2 = g;
  g2.out.reset();
  RunConfig c = resolve_config(g2);
  if (g.seed) c.data.seed = *g.seed;
  const fs::path root = g.out ? fs::path(*g.out) : fs::path(c.dataset_dir);
  fs::create_directories(root);
  const auto entries = train::generate_dataset(c.data, root);
  write_text(root / "config.resolved.json", train::to_json(c).dump(2) + "\n");
  log << "wrote " << entries.size() << " samples to " << root.string() << "\n";
  return kSuccess;
}

/// Loads a split from disk when a manifest exists, otherwise synthesizes it
/// from the dataset section of the configuration.
inline train::Dataset obtain_split(const RunConfig& c, const fs::path& dir, const std::string& split,
                                   std::ostream& log) {
  if (fs::exists(dir / train::kManifestName))
    return train::load_split(dir, split, c.model.encoder.image_height, c.model.encoder.image_width);
  log << "note: no dataset at " << dir.string() << ", synthesizing the " << split << " split in memory\n";
  return train::make_split(c.data, split);
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::optional<std::string> variant;
  std::optional<std::string> resume;
  std::optional<std::string> data;
};

inline std::string history_csv(const std::vector<train::EpochRecord>& h) {
  std::string s = train::history_header() + "\n";
  for (const auto& r : h) s += train::history_line(r) + "\n";
  return s;
}

/// Trains one variant. Outputs in --out: config.resolved.json, history.csv,
/// last.ckpt and best.ckpt (best validation CD; last epoch when there is no
/// validation split).
inline int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& log = std::cout) {
  RunConfig c = resolve_config(g);
  if (g.seed) c.train.seed = *g.seed;
  if (o.variant) {
    try {
      c.train.variant = model::parse_variant(*o.variant);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--variant: ") + e.what());
    }
  }
  if (o.resume && !fs::exists(*o.resume)) throw ConfigError("--resume: no such checkpoint: " + *o.resume);
  const fs::path out = c.output_dir;
  const fs::path data_dir = o.data ? fs::path(*o.data) : fs::path(c.dataset_dir);

  const auto train_set = obtain_split(c, data_dir, "train", log);
  const auto val_set = obtain_split(c, data_dir, "val", log);
  model::CompletionModel<float> m(c.model, c.train.variant, c.train.seed);
  train::Trainer<float> trainer(m, c.train, train_set, val_set, c.tau);
  if (o.resume) {
    const auto d = train::read_checkpoint(*o.resume);
    if (d.variant != c.train.variant)
      throw CheckpointError(CheckpointError::Kind::Incompatible,
                            "--resume: checkpoint variant " + model::to_string(d.variant) + " differs from " +
                                model::to_string(c.train.variant));
    trainer.resume(d);
    log << "resumed from " << *o.resume << " after epoch " << d.epoch << "\n";
  }

  fs::create_directories(out);
  write_text(out / "config.resolved.json", train::to_json(c).dump(2) + "\n");
  log << "training " << model::to_string(c.train.variant) << " on " << train_set.size() << " samples, "
      << m.params().scalar_count() << " parameters\n";

  train::TrainHooks<float> hooks;
  hooks.on_epoch_end = [&](const train::EpochRecord& r) {
    const auto state = trainer.train_state();
    train::save_checkpoint(out / "last.ckpt", m, r.epoch, &trainer.optimizer(), state);
    if (trainer.latest_is_best() || (val_set.empty() && r.epoch == c.train.epochs))
      train::save_checkpoint(out / "best.ckpt", m, r.epoch, static_cast<const train::Adam<float>*>(nullptr), state);
    write_text(out / "history.csv", history_csv(trainer.history()));
    log << "epoch " << r.epoch << "/" << c.train.epochs << "  alpha " << std::setprecision(4) << r.alpha << "  loss "
        << std::setprecision(6) << r.train_loss;
    if (std::isfinite(r.val_cd)) log << "  val_cd " << r.val_cd << "  val_f1 " << r.val_f1;
    log << "\n";
  };
  trainer.train(hooks);
  write_text(out / "history.csv", history_csv(trainer.history()));
  return kSuccess;
}

// ---------------------------------------------------------------- complete

struct CompleteOptions {
  std::string checkpoint;
  std::string image;
  std::string partial;
  std::string output;
  bool trace = false;
};

/// Path of stage l when --trace is given: out.xyz -> out.stage<l>.xyz.
inline fs::path stage_path(const fs::path& output, int stage) {
  fs::path p = output;
  const std::string ext = p.has_extension() ? p.extension().string() : ".xyz";
  p.replace_extension();
  return fs::path(p.string() + ".stage" + std::to_string(stage) + ext);
}

inline int cmd_complete(const GlobalOptions& g, const CompleteOptions& o, std::ostream& log = std::cout) {
  if (o.checkpoint.empty()) throw ConfigError("complete: --checkpoint is required");
  if (o.image.empty()) throw ConfigError("complete: --image is required");
  if (o.partial.empty()) throw ConfigError("complete: --partial is required");
  if (o.output.empty()) throw ConfigError("complete: --output is required");
  if (g.config) resolve_config(g);  // validated for consistency; the checkpoint defines the model

  const auto d = train::read_checkpoint(o.checkpoint);
  model::CompletionModel<float> m(d.model, d.variant, 0);
  train::restore(m, d);
  const auto image = io::read_image(o.image, d.model.encoder.image_height, d.model.encoder.image_width);
  const auto partial = io::read_xyz<float>(o.partial);
  if (static_cast<int>(partial.size()) < m.partial_points_needed())
    throw InvalidInput("complete: " + o.partial + " has " + std::to_string(partial.size()) +
                       " points but the model needs at least " + std::to_string(m.partial_points_needed()));
  const auto kept = m.prepare_partial(partial.span(), g.seed.value_or(0));

  ag::Tape<float> t(false);
  const auto f = m.forward(t, image, kept);
  const fs::path out = o.output;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_xyz(out.string(), train::to_cloud<float>(f.final_points().value()).span());
  if (o.trace)
    for (std::size_t l = 0; l < f.trace.stages.size(); ++l)
      io::write_xyz(stage_path(out, static_cast<int>(l)).string(),
                    train::to_cloud<float>(f.trace.stages[l].value()).span());
  log << "wrote " << f.final_points().rows() << " points to " << out.string();
  if (o.trace) log << " and " << f.trace.stages.size() << " stage files";
  log << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string checkpoint;
  std::optional<std::string> data;
  std::string split = "test";
  bool plots = false;
  bool gt_as_pred = false;  // debug: score ground truth against itself
};

inline std::string eval_table(const train::EvalResult& r) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %6s %12s %8s\n", "category", "n", "CD(x1e3)", "F1");
  s << line;
  for (const auto& [name, c] : r.categories) {
    std::snprintf(line, sizeof line, "%-12s %6d %12.4f %8.4f\n", name.c_str(), c.count, c.chamfer * 1e3, c.f1);
    s << line;
  }
  std::snprintf(line, sizeof line, "%-12s %6d %12.4f %8.4f\n", "mean", r.mean.count, r.mean.chamfer * 1e3, r.mean.f1);
  s << line;
  if (!r.stage_chamfer.empty()) {
    s << "stage CD(x1e3):";
    for (std::size_t l = 0; l < r.stage_chamfer.size(); ++l) {
      std::snprintf(line, sizeof line, " P%zu=%.4f", l, r.stage_chamfer[l] * 1e3);
      s << line;
    }
    s << "\n";
  }
  return s.str();
}

inline train::EvalResult evaluate_ground_truth(const train::Dataset& data, double tau) {
  train::EvalResult r;
  for (const auto& s : data) {
    const auto gt = s.gt.cast<double>();
    const auto rep = fscore(gt.span(), gt.span(), tau);
    r.samples.push_back({s.category, rep.chamfer, rep.f1, {}});
    auto& c = r.categories[s.category];
    ++c.count;
    c.chamfer += rep.chamfer;
    c.f1 += rep.f1;
    r.mean.chamfer += rep.chamfer;
    r.mean.f1 += rep.f1;
  }
  for (auto& [_, c] : r.categories) c.chamfer /= c.count, c.f1 /= c.count;
  r.mean.count = static_cast<int>(data.size());
  if (r.mean.count) r.mean.chamfer /= r.mean.count, r.mean.f1 /= r.mean.count;
  return r;
}

/// Per-category CD x 1e3 and F1 on a split; the table goes to stdout and to
/// <out>/eval_<split>.txt, plots to <out>/eval_<split>_*.svg.
inline int cmd_eval(const GlobalOptions& g, const EvalOptions& o, std::ostream& log = std::cout) {
  if (o.checkpoint.empty() && !o.gt_as_pred) throw ConfigError("eval: --checkpoint is required");
  if (o.split != "train" && o.split != "val" && o.split != "test")
    throw ConfigError("eval: --split must be train, val or test");
  RunConfig c = resolve_config(g);
  if (g.seed) c.data.seed = *g.seed;
  std::optional<train::CheckpointData> d;
  if (!o.gt_as_pred) {
    d = train::read_checkpoint(o.checkpoint);
    c.model = d->model;
    c.sync_data();
  }
  const fs::path data_dir = o.data ? fs::path(*o.data) : fs::path(c.dataset_dir);
  const auto data = obtain_split(c, data_dir, o.split, log);
  if (data.empty()) throw InvalidInput("eval: split '" + o.split + "' is empty");

  train::EvalResult r;
  if (o.gt_as_pred) {
    r = evaluate_ground_truth(data, c.tau);
  } else {
    model::CompletionModel<float> m(d->model, d->variant, 0);
    train::restore(m, *d);
    r = train::evaluate(m, train::prepare(m, data), c.tau);
  }
  const std::string table = eval_table(r);
  log << table;
  const fs::path out = c.output_dir;
  write_text(out / ("eval_" + o.split + ".txt"), table);
  if (o.plots) {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& [name, cm] : r.categories) bars.emplace_back(name, cm.chamfer * 1e3);
    write_text(out / ("eval_" + o.split + "_categories.svg"), bar_chart_svg("CD x 1e3 per category", bars));
    if (!r.stage_chamfer.empty()) {
      std::vector<double> ys;
      for (double v : r.stage_chamfer) ys.push_back(v * 1e3);
      write_text(out / ("eval_" + o.split + "_stages.svg"), line_chart_svg("CD x 1e3 per refinement stage", ys));
    }
  }
  return kSuccess;
}

// ---------------------------------------------------------------- metrics

struct MetricsOptions {
  std::string pred;
  std::string gt;
  std::optional<double> tau;
};

inline int cmd_metrics(const GlobalOptions& g, const MetricsOptions& o, std::ostream& log = std::cout) {
  if (o.pred.empty() || o.gt.empty()) throw ConfigError("metrics: --pred and --gt are required");
  double tau = kDefaultFscoreTau;
  if (g.config) tau = resolve_config(g).tau;
  if (o.tau) tau = *o.tau;
  if (!(tau > 0) || !std::isfinite(tau)) throw ConfigError("--tau: must be positive");
  const auto pred = io::read_xyz<double>(o.pred);
  const auto gt = io::read_xyz<double>(o.gt);
  const auto rep = fscore(pred.span(), gt.span(), tau);
  char buf[128];
  std::snprintf(buf, sizeof buf, "CD %.9g\nF1 %.9g\n", rep.chamfer, rep.f1);
  log << buf;
  return kSuccess;
}

}  // namespace i2pref::cli
