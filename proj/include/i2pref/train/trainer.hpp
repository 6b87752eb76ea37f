// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "i2pref/train/checkpoint.hpp"
#include "i2pref/train/loss.hpp"

namespace i2pref::train {

using ag::Mat;

struct EpochRecord {
  int epoch = 0;  // 1-based
  double alpha = 0;
  double train_loss = 0;
  double train_cd = 0;  // CD(refined, gt) averaged over the epoch
  double val_cd = std::numeric_limits<double>::quiet_NaN();
  double val_f1 = std::numeric_limits<double>::quiet_NaN();
  long steps = 0;  // optimizer steps taken so far
};

inline json to_json(const EpochRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"epoch", r.epoch},         {"alpha", r.alpha},   {"train_loss", r.train_loss},
              {"train_cd", r.train_cd},   {"val_cd", num(r.val_cd)}, {"val_f1", num(r.val_f1)},
              {"steps", r.steps}};
}

inline EpochRecord epoch_record_from_json(const json& j) {
  auto num = [](const json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); };
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.alpha = j.at("alpha").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.train_cd = j.at("train_cd").get<double>();
  r.val_cd = num(j.at("val_cd"));
  r.val_f1 = num(j.at("val_f1"));
  r.steps = j.at("steps").get<long>();
  return r;
}

/// Coarse-loss weight actually used by a variant at a given epoch. Only the
/// full model anneals it: no-recon drops the term, i2p-only has no separate
/// refined cloud, and p2p-only has no trainable coarse stage.
inline double effective_alpha(model::Variant v, const LossSchedule& s, int epoch0) {
  return v == model::Variant::Full ? alpha_at(s, epoch0) : 0.0;
}

/// Sample converted once to the model scalar with its partial already selected.
template <typename T>
struct PreparedSample {
  const TrainSample* source = nullptr;
  BasicPointCloud<T> kept_partial;
  Mat<T> gt;
};

template <typename T>
std::vector<PreparedSample<T>> prepare(const model::CompletionModel<T>& m, const Dataset& data) {
  std::vector<PreparedSample<T>> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    PreparedSample<T> p;
    p.source = &s;
    const auto partial = s.partial.template cast<T>();
    p.kept_partial = m.prepare_partial(partial.span(), s.seed);
    const auto gt = s.gt.template cast<T>();
    p.gt = Eigen::Map<const Mat<T>>(gt.data(), static_cast<Eigen::Index>(gt.size()), 3);
    out.push_back(std::move(p));
  }
  return out;
}

struct SampleMetrics {
  std::string category;
  double chamfer = 0;
  double f1 = 0;
  std::vector<double> stage_chamfer;  // CD(P(l), gt) for l = 0..L
};

struct CategoryMetrics {
  int count = 0;
  double chamfer = 0;
  double f1 = 0;
};

struct EvalResult {
  std::vector<SampleMetrics> samples;
  std::map<std::string, CategoryMetrics> categories;
  CategoryMetrics mean;  // over all samples
  std::vector<double> stage_chamfer;
};

template <typename T>
BasicPointCloud<T> to_cloud(const Mat<T>& m) {
  BasicPointCloud<T> c;
  for (Eigen::Index i = 0; i < m.rows(); ++i) c.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return c;
}

template <typename T>
EvalResult evaluate(const model::CompletionModel<T>& m, const std::vector<PreparedSample<T>>& data, double tau) {
  EvalResult r;
  for (const auto& s : data) {
    ag::Tape<T> t(false);
    const auto f = m.forward(t, s.source->image, s.kept_partial);
    const auto gt = s.source->gt.template cast<double>();
    SampleMetrics sm;
    sm.category = s.source->category;
    for (const auto& stage : f.trace.stages)
      sm.stage_chamfer.push_back(chamfer_distance(to_cloud<T>(stage.value()).template cast<double>().span(), gt.span()));
    const auto pred = to_cloud<T>(f.final_points().value()).template cast<double>();
    const auto rep = fscore(pred.span(), gt.span(), tau);
    sm.chamfer = rep.chamfer;
    sm.f1 = rep.f1;
    r.samples.push_back(std::move(sm));
  }
  for (const auto& s : r.samples) {
    auto& c = r.categories[s.category];
    ++c.count;
    c.chamfer += s.chamfer;
    c.f1 += s.f1;
    r.mean.chamfer += s.chamfer;
    r.mean.f1 += s.f1;
    if (r.stage_chamfer.size() < s.stage_chamfer.size()) r.stage_chamfer.resize(s.stage_chamfer.size(), 0.0);
    for (std::size_t l = 0; l < s.stage_chamfer.size(); ++l) r.stage_chamfer[l] += s.stage_chamfer[l];
  }
  for (auto& [_, c] : r.categories) {
    c.chamfer /= c.count;
    c.f1 /= c.count;
  }
  r.mean.count = static_cast<int>(r.samples.size());
  if (r.mean.count > 0) {
    r.mean.chamfer /= r.mean.count;
    r.mean.f1 /= r.mean.count;
    for (auto& v : r.stage_chamfer) v /= r.mean.count;
  } else {
    r.mean.chamfer = r.mean.f1 = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

template <typename T>
struct TrainHooks {
  /// Optional additional loss term added to each sample's objective. Returning
  /// std::nullopt (the default) leaves the objective unchanged.
  std::function<std::optional<ag::Var<T>>(ag::Tape<T>&, const model::ForwardResult<T>&, const PreparedSample<T>&)>
      extra_loss;
  /// Called after every epoch with the record just appended to the history.
  std::function<void(const EpochRecord&)> on_epoch_end;
};

/// Mini-batch trainer. Gradients of a batch are accumulated sample by sample
/// (each scaled by 1/B) before one Adam step.
template <typename T>
class Trainer {
 public:
  Trainer(model::CompletionModel<T>& m, const TrainSettings& settings, const Dataset& train, const Dataset& val,
          double tau = kDefaultFscoreTau)
      : model_(m), settings_(settings), opt_(m.params()), tau_(tau) {
    settings_.schedule().validate();
    if (train.empty()) throw InvalidInput("train: the training split is empty");
    train_ = prepare(m, train);
    val_ = prepare(m, val);
  }

  Adam<T>& optimizer() { return opt_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  int completed_epochs() const { return history_.empty() ? 0 : history_.back().epoch; }
  double best_val_cd() const { return best_val_cd_; }
  const std::vector<PreparedSample<T>>& train_samples() const { return train_; }
  const std::vector<PreparedSample<T>>& val_samples() const { return val_; }

  long steps_per_epoch() const {
    return static_cast<long>((train_.size() + settings_.batch_size - 1) / settings_.batch_size);
  }
  long total_steps() const { return steps_per_epoch() * settings_.epochs; }

  json train_state() const {
    json h = json::array();
    for (const auto& r : history_) h.push_back(to_json(r));
    return json{{"history", h},
                {"best_val_cd", std::isfinite(best_val_cd_) ? json(best_val_cd_) : json(nullptr)}};
  }

  /// Restores model, optimizer and history from a checkpoint written by a run
  /// with the same configuration; training continues at the next epoch.
  void resume(const CheckpointData& d) {
    restore(model_, d, &opt_);
    history_.clear();
    for (const auto& r : d.train_state.value("history", json::array())) history_.push_back(epoch_record_from_json(r));
    const json b = d.train_state.value("best_val_cd", json(nullptr));
    best_val_cd_ = b.is_null() ? std::numeric_limits<double>::infinity() : b.get<double>();
    if (completed_epochs() != d.epoch) throw CheckpointError(CheckpointError::Kind::Corrupt, "history does not match epoch");
  }

  EpochRecord run_epoch(int epoch, const TrainHooks<T>& hooks = {}) {
    const int e0 = epoch - 1;
    const double alpha = effective_alpha(model_.variant(), settings_.schedule(), e0);
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(settings_.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = alpha;
    const std::size_t bs = static_cast<std::size_t>(settings_.batch_size);
    int batch = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch) {
      const std::size_t end = std::min(order.size(), start + bs);
      const T inv_b = static_cast<T>(1.0 / static_cast<double>(end - start));
      model_.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train_[order[k]];
        ag::Tape<T> t;
        const auto f = model_.forward(t, s.source->image, s.kept_partial);
        auto terms = total_loss(f.coarse.points, f.final_points(), t.constant(s.gt), static_cast<T>(alpha));
        auto loss = terms.total;
        if (hooks.extra_loss)
          if (auto extra = hooks.extra_loss(t, f, s)) loss = ag::add(loss, *extra);
        const double lv = static_cast<double>(loss.value()(0, 0));
        if (!std::isfinite(lv))
          throw NumericalFailure("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch));
        rec.train_loss += lv;
        rec.train_cd += static_cast<double>(terms.refined_cd.value()(0, 0));
        if (t.requires_grad(loss)) t.backward(loss, inv_b);
      }
      const double lr = cosine_lr(settings_.lr, opt_.steps(), total_steps());
      try {
        opt_.step(model_.params(), lr, settings_.grad_clip);
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch));
      }
    }
    rec.train_loss /= static_cast<double>(train_.size());
    rec.train_cd /= static_cast<double>(train_.size());
    rec.steps = opt_.steps();
    if (!val_.empty() && (epoch % settings_.val_every == 0 || epoch == settings_.epochs)) {
      const auto ev = evaluate(model_, val_, tau_);
      rec.val_cd = ev.mean.chamfer;
      rec.val_f1 = ev.mean.f1;
    }
    history_.push_back(rec);
    if (std::isfinite(rec.val_cd) && rec.val_cd < best_val_cd_) best_val_cd_ = rec.val_cd;
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec);
    return rec;
  }

  /// Runs the remaining epochs up to settings.epochs.
  const std::vector<EpochRecord>& train(const TrainHooks<T>& hooks = {}) {
    for (int e = completed_epochs() + 1; e <= settings_.epochs; ++e) run_epoch(e, hooks);
    return history_;
  }

  /// True when the latest epoch set a new best validation CD.
  bool latest_is_best() const {
    return !history_.empty() && std::isfinite(history_.back().val_cd) && history_.back().val_cd <= best_val_cd_;
  }

 private:
  model::CompletionModel<T>& model_;
  TrainSettings settings_;
  Adam<T> opt_;
  double tau_;
  std::vector<PreparedSample<T>> train_, val_;
  std::vector<EpochRecord> history_;
  double best_val_cd_ = std::numeric_limits<double>::infinity();
};

/// Fixed-precision CSV line for a history record.
inline std::string history_header() { return "epoch,alpha,train_loss,val_cd,val_f1"; }

inline std::string history_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g", r.epoch, r.alpha, r.train_loss, r.val_cd, r.val_f1);
  return buf;
}

}  // namespace i2pref::train
