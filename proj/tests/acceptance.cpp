// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset, e.g. `acceptance 1 2 4`.
#include <chrono>
#include <cstdio>
#include <set>

#include "i2pref/cli/commands.hpp"
#include "test_support.hpp"

using namespace i2pref;
using namespace i2pref::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

fs::path config_path(const char* name) { return fs::path(I2PREF_SOURCE_DIR) / "configs" / name; }

// ---- oracles ------------------------------------------------------------

double directed_oracle(const PointCloud& a, const PointCloud& b) {
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double dx = a[i][0] - b[j][0], dy = a[i][1] - b[j][1], dz = a[i][2] - b[j][2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    total += best;
  }
  return total / static_cast<double>(a.size());
}

double hit_oracle(const PointCloud& a, const PointCloud& b, double tau) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool hit = false;
    for (std::size_t j = 0; j < b.size() && !hit; ++j) {
      const double dx = a[i][0] - b[j][0], dy = a[i][1] - b[j][1], dz = a[i][2] - b[j][2];
      hit = dx * dx + dy * dy + dz * dz < tau;
    }
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

// ---- criteria -----------------------------------------------------------

Outcome metric_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> small(1, 512), large(1, 2048);
  double worst_cd = 0, worst_f1 = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_cloud(small(rng), rng, -0.1, 0.1), b = random_cloud(small(rng), rng, -0.1, 0.1);
    const double cd = directed_oracle(a, b) + directed_oracle(b, a);
    const double p = hit_oracle(a, b, 0.001), r = hit_oracle(b, a, 0.001);
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0;
    worst_cd = std::max(worst_cd, std::abs(chamfer_distance(a.span(), b.span()) - cd));
    worst_f1 = std::max(worst_f1, std::abs(fscore(a.span(), b.span(), 0.001).f1 - f1));
  }
  o.require(worst_cd <= 1e-9, "CD deviates by " + fmt("%.3g", worst_cd));
  o.require(worst_f1 <= 1e-9, "F1 deviates by " + fmt("%.3g", worst_f1));
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const bool lattice = trial % 2 == 0;
    const std::size_t nq = large(rng), nt = large(rng);
    const auto q = lattice ? lattice_cloud(nq, rng) : random_cloud(nq, rng);
    const auto t = lattice ? lattice_cloud(nt, rng) : random_cloud(nt, rng);
    const auto x = nn_bruteforce(q.span(), t.span()), y = nn_accelerated(q.span(), t.span());
    mismatches += x.indices != y.indices || x.sq_distances != y.sq_distances;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " nn mismatches");
  const double secs = seconds_since(t0);
  o.require(secs < 60, "took " + fmt("%.1f", secs) + "s");
  o.note("200 CD/F1 instances, max |dCD| " + fmt("%.2g", worst_cd) + ", 100 nn instances, " + fmt("%.1f", secs) + "s");
  return o;
}

Outcome hand_values() {
  Outcome o;
  PointCloud origin{{0, 0, 0}}, unit_x{{1, 0, 0}}, two{{0, 0, 0}, {1, 0, 0}};
  const double cd1 = chamfer_distance(origin.span(), unit_x.span());
  const double cd2 = chamfer_distance(two.span(), origin.span());
  std::mt19937_64 rng(1);
  const auto c = random_cloud(64, rng);
  const double f_same = fscore(c.span(), c.span()).f1;
  PointCloud far{{5, 5, 5}, {6, 5, 5}};
  const double f_far = fscore(c.span(), far.span()).f1;
  o.require(cd1 == 2.0, "CD({0},{e_x}) = " + fmt("%.17g", cd1));
  o.require(cd2 == 0.5, "two-vs-one CD = " + fmt("%.17g", cd2));
  o.require(f_same == 1.0, "F1(pred=gt) = " + fmt("%.17g", f_same));
  o.require(f_far == 0.0, "F1 beyond tau = " + fmt("%.17g", f_far));
  if (o.pass) o.note("2.0, 0.5, 1, 0 exactly");
  return o;
}

Outcome gradient_checks() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 r(31);
  double worst = 0;
  {
    ag::ParameterStore<double> ps;
    auto& p = ps.add("p", random_mat(40, 3, r));
    auto& g = ps.add("g", random_mat(55, 3, r));
    const auto rep = grad_check(ps, [&](Tape<double>& t) { return ag::chamfer(t.parameter(p), t.parameter(g)); },
                                1e-4, 1000);
    o.require(rep.max_rel_error <= 1e-3, "chamfer: " + rep.worst);
    o.note("chamfer " + fmt("%.2g", rep.max_rel_error));
    worst = std::max(worst, rep.max_rel_error);
  }
  {
    ag::ParameterStore<double> ps;
    model::Rng rng(32);
    model::ResNetBlock<double> block(ps, "block", 4, 8, rng);
    auto& x = ps.add("x", Mat<double>::Zero(4, 36));
    perturb(ps, r, 0.3);
    const Mat<double> w = random_mat(8, 36, r);
    const auto rep = grad_check(ps, [&](Tape<double>& t) {
      auto y = block(t, {t.parameter(x), 4, 6, 6}).data;
      return ag::sum(ag::tanh(ag::add(y, t.constant(w))));
    }, 1e-4, 64);
    o.require(rep.max_rel_error <= 1e-3, "resnet_block: " + rep.worst);
    o.note("resnet_block " + fmt("%.2g", rep.max_rel_error));
  }
  {
    ag::ParameterStore<double> ps;
    model::Rng rng(33);
    model::PointRefiner<double> ref(ps, {4, 16, 4, 32, false}, 16, rng);
    auto& x = ps.add("x", Mat<double>::Zero(24, 16));
    perturb(ps, r, 0.4);
    const Mat<double> w = random_mat(24, 3, r);
    for (int stage = 0; stage < 4; stage += 3) {
      const auto rep = grad_check(ps, [&](Tape<double>& t) {
        auto y = ref.predict_offsets(t, t.parameter(x), stage);
        return ag::sum(ag::tanh(ag::add(y, t.constant(w))));
      }, 1e-4, 64);
      o.require(rep.max_rel_error <= 1e-3, "predict_offsets: " + rep.worst);
      o.note("predict_offsets[" + std::to_string(stage) + "] " + fmt("%.2g", rep.max_rel_error));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 120, "took " + fmt("%.1f", secs) + "s");
  return o;
}

Outcome structural_invariants() {
  Outcome o;
  train::RunConfig desk = train::load_run_config(config_path("desk.json").string());
  const auto& mc = desk.model;
  train::DatasetSpec spec = desk.data;
  spec.train_per_category = 1;
  const auto samples = train::make_split(spec, "train");

  model::CompletionModel<float> m(mc, model::Variant::Full, 5);
  const auto& s = samples.front();
  const auto kept = m.prepare_partial(s.partial.span(), s.seed);
  {
    Tape<float> t(false);
    const auto f = m.forward(t, s.image, kept);
    const bool identity = (f.final_points().value().array() == f.coarse.points.value().array()).all();
    o.require(identity, "P(L) != P(0) at init");
    o.require(f.coarse.points.rows() == mc.generator.n_generated() + mc.keep,
              "coarse count " + std::to_string(f.coarse.points.rows()));
  }
  // Give the refiner non-trivial weights before checking additivity and counts.
  std::mt19937_64 r(6);
  for (auto& p : m.params())
    if (p->name.rfind("refiner.", 0) == 0) p->value += random_mat(p->value.rows(), p->value.cols(), r, 0.05).cast<float>();
  {
    Tape<float> t(false);
    const auto f = m.forward(t, s.image, kept);
    bool additive = true, counts = true;
    for (std::size_t l = 0; l < f.trace.offsets.size(); ++l) {
      const Mat<float> sum = f.trace.stages[l].value() + f.trace.offsets[l].value();
      additive = additive && (sum.array() == f.trace.stages[l + 1].value().array()).all();
      counts = counts && f.trace.stages[l + 1].rows() == f.coarse.points.rows();
    }
    o.require(additive, "trace not bitwise additive");
    o.require(counts, "point count changed across stages");
    o.require(!f.trace.offsets.back().value().isZero(0), "offsets stayed zero after perturbation");
  }
  {
    ag::ParameterStore<double> ps;
    model::Rng rng(7);
    model::PointRefiner<double> ref(ps, mc.refiner, mc.encoder.token_width(), rng);
    perturb(ps, r, 0.05);
    const Mat<double> coarse = random_mat(128, 3, r), tokens = random_mat(16, mc.encoder.token_width(), r);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(128);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 128, r);
    Tape<double> t(false);
    const Mat<double> a = ref(t, t.constant(coarse), t.constant(tokens)).final_points().value();
    const Mat<double> b = ref(t, t.constant(perm * coarse), t.constant(tokens)).final_points().value();
    const double err = (perm * a - b).cwiseAbs().maxCoeff();
    o.require(err <= 1e-10, "permutation equivariance error " + fmt("%.3g", err));
    o.note("equivariance error " + fmt("%.2g", err));
  }
  const train::LossSchedule sched = desk.train.schedule();
  const double a0 = train::alpha_at(sched, 0), a1 = train::alpha_at(sched, sched.total_epochs - 1);
  o.require(a0 == 0.7 && a1 == 0.1, "alpha endpoints " + fmt("%.17g", a0) + ", " + fmt("%.17g", a1));
  return o;
}

Outcome overfit() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto cfg = train::load_run_config(config_path("overfit.json").string());
  const auto data = train::make_split(cfg.data, "train");
  o.require(data.size() == 8, "expected 8 samples, got " + std::to_string(data.size()));
  model::CompletionModel<float> m(cfg.model, model::Variant::Full, cfg.train.seed);
  train::Trainer<float> tr(m, cfg.train, data, {});
  try {
    tr.train();
  } catch (const NumericalFailure& e) {
    o.require(false, e.what());
    return o;
  }
  const auto& h = tr.history();
  bool finite = true;
  for (const auto& rec : h) finite = finite && std::isfinite(rec.train_loss) && std::isfinite(rec.train_cd);
  const double first = h.front().train_cd;
  const double final_cd = train::evaluate(m, tr.train_samples(), cfg.tau).mean.chamfer;
  o.require(finite && std::isfinite(final_cd), "non-finite loss");
  o.require(static_cast<int>(h.size()) == 300, "ran " + std::to_string(h.size()) + " epochs");
  o.require(final_cd <= 0.1 * first, "final CD " + fmt("%.4g", final_cd) + " > 10% of " + fmt("%.4g", first));
  const double secs = seconds_since(t0);
  o.require(secs < 600, "took " + fmt("%.0f", secs) + "s");
  o.note("epoch-1 CD " + fmt("%.4g", first) + " -> final " + fmt("%.4g", final_cd) + " (" +
         fmt("%.1f", 100 * final_cd / first) + "%), " + fmt("%.0f", secs) + "s");
  return o;
}

Outcome ablation() {
  Outcome o;
  const auto t0 = Clock::now();
  auto cfg = train::load_run_config(config_path("ablation.json").string());
  const auto train_set = train::make_split(cfg.data, "train");
  const auto test_set = train::make_split(cfg.data, "test");
  o.require(train_set.size() == 4 * 64 && test_set.size() == 4 * 16, "split sizes");
  std::map<model::Variant, double> mean_cd;
  const model::Variant variants[] = {model::Variant::Full, model::Variant::I2POnly, model::Variant::P2POnly,
                                     model::Variant::NoReconLoss};
  for (auto v : variants) {
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      cfg.train.seed = seed;
      model::CompletionModel<float> m(cfg.model, v, seed);
      train::Trainer<float> tr(m, cfg.train, train_set, {});
      tr.train();
      const double cd = train::evaluate(m, train::prepare(m, test_set), cfg.tau).mean.chamfer;
      std::printf("  ablation %-9s seed %llu  test CD %.6f\n", model::to_string(v).c_str(),
                  static_cast<unsigned long long>(seed), cd);
      std::fflush(stdout);
      sum += cd;
    }
    mean_cd[v] = sum / 3;
  }
  const double full = mean_cd[model::Variant::Full];
  o.require(full < mean_cd[model::Variant::I2POnly], "Full >= I2POnly");
  o.require(full < mean_cd[model::Variant::P2POnly], "Full >= P2POnly");
  o.require(mean_cd[model::Variant::NoReconLoss] >= full, "NoReconLoss < Full");
  const double secs = seconds_since(t0);
  o.require(secs < 7200, "took " + fmt("%.0f", secs) + "s");
  for (auto v : variants) o.note(model::to_string(v) + " CDx1e3 " + fmt("%.3f", 1e3 * mean_cd[v]));
  o.note(fmt("%.0f", secs) + "s");
  return o;
}

std::vector<std::vector<double>> parse_history(const fs::path& p) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(row);
  }
  return rows;
}

Outcome determinism() {
  Outcome o;
  const auto dir = scratch_dir("acceptance_determinism");
  std::ostringstream log;
  auto c = tiny_run((dir / "a").string());
  c.train.epochs = 4;
  cli::write_text(dir / "config.json", train::to_json(c).dump(2));
  const std::string cfg = (dir / "config.json").string();
  o.require(cli::cmd_train({cfg, 3, (dir / "a").string()}, {}, log) == 0, "first cmd_train failed");
  o.require(cli::cmd_train({cfg, 3, (dir / "b").string()}, {}, log) == 0, "second cmd_train failed");
  const auto ha = parse_history(dir / "a" / "history.csv"), hb = parse_history(dir / "b" / "history.csv");
  double worst = 0;
  bool shape_ok = ha.size() == 4 && ha.size() == hb.size();
  for (std::size_t i = 0; shape_ok && i < ha.size(); ++i) {
    shape_ok = ha[i].size() == 5 && hb[i].size() == 5;
    for (std::size_t k = 0; shape_ok && k < 5; ++k)
      worst = std::max(worst, std::abs(ha[i][k] - hb[i][k]) / std::max(std::abs(ha[i][k]), 1e-300));
  }
  o.require(shape_ok, "history shape");
  o.require(worst <= 1e-6, "history relative difference " + fmt("%.3g", worst));

  // Completion with the 2048-point preset.
  const auto pp = train::load_run_config(config_path("points-2048.json").string());
  model::CompletionModel<float> m(pp.model, model::Variant::Full, 1);
  std::mt19937_64 r(8);
  for (auto& p : m.params())
    if (p->name.rfind("refiner.", 0) == 0) p->value += random_mat(p->value.rows(), p->value.cols(), r, 0.02).cast<float>();
  train::save_checkpoint(dir / "pp.ckpt", m, 0);
  train::DatasetSpec spec = pp.data;
  spec.train_per_category = 1;
  const auto sample = train::make_split(spec, "train").front();
  train::write_sample(dir / "sample", sample);
  for (const char* out : {"one.xyz", "two.xyz"}) {
    cli::CompleteOptions co{(dir / "pp.ckpt").string(), (dir / "sample" / "image.png").string(),
                            (dir / "sample" / "partial.xyz").string(), (dir / out).string(), true};
    o.require(cli::cmd_complete({}, co, log) == 0, "cmd_complete failed");
  }
  bool same = read_file(dir / "one.xyz") == read_file(dir / "two.xyz");
  for (int l = 0; l <= pp.model.refiner.n_stages; ++l)
    same = same && read_file(cli::stage_path(dir / "one.xyz", l)) == read_file(cli::stage_path(dir / "two.xyz", l));
  o.require(same, "cmd_complete outputs differ");
  const auto pred = io::read_xyz<float>((dir / "one.xyz").string());
  o.require(pred.size() == 2048, "completion has " + std::to_string(pred.size()) + " points");
  o.note("history max rel diff " + fmt("%.2g", worst) + ", 2048-point completions byte-identical: " +
         (same ? "yes" : "no"));
  return o;
}

Outcome round_trip() {
  Outcome o;
  const auto dir = scratch_dir("acceptance_roundtrip");
  const auto desk = train::load_run_config(config_path("desk.json").string());
  model::CompletionModel<float> m(desk.model, model::Variant::Full, 9);
  std::mt19937_64 r(10);
  for (auto& p : m.params()) p->value += random_mat(p->value.rows(), p->value.cols(), r, 0.01).cast<float>();
  train::Adam<float> opt(m.params());
  train::save_checkpoint(dir / "m.ckpt", m, 12, &opt);
  const auto d = train::read_checkpoint(dir / "m.ckpt");
  model::CompletionModel<float> m2(d.model, d.variant, 0);
  train::restore(m2, d);
  train::DatasetSpec spec = desk.data;
  spec.train_per_category = 1;
  bool identical = true;
  for (const auto& s : train::make_split(spec, "train")) {
    Tape<float> t1(false), t2(false);
    const auto a = m.forward(t1, s.image, m.prepare_partial(s.partial.span(), s.seed));
    const auto b = m2.forward(t2, s.image, m2.prepare_partial(s.partial.span(), s.seed));
    for (std::size_t l = 0; l < a.trace.stages.size(); ++l)
      identical = identical && (a.trace.stages[l].value().array() == b.trace.stages[l].value().array()).all();
  }
  o.require(identical, "forward after reload differs");

  spec.train_per_category = 3;
  spec.val_per_category = 1;
  spec.test_per_category = 1;
  train::generate_dataset(spec, dir / "d1");
  train::generate_dataset(spec, dir / "d2");
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "d1")) {
    if (!e.is_regular_file()) continue;
    ++files;
    differing += read_file(e.path()) != read_file(dir / "d2" / fs::relative(e.path(), dir / "d1"));
  }
  o.require(files > 0 && differing == 0, std::to_string(differing) + " of " + std::to_string(files) + " files differ");
  o.note("checkpoint forward bitwise equal, " + std::to_string(files) + " dataset files byte-identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "metric oracle suite", metric_oracles},     {2, "hand-forced metric values", hand_values},
      {3, "gradient checks", gradient_checks},        {4, "structural invariants", structural_invariants},
      {5, "overfit eight samples", overfit},          {6, "ablation ordering", ablation},
      {7, "determinism", determinism},                {8, "round-trip", round_trip},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
