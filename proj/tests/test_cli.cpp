// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "i2pref/cli/commands.hpp"
#include "test_support.hpp"

using namespace i2pref;
using namespace i2pref::testing;
namespace fs = std::filesystem;

namespace {

/// Writes a tiny configuration to <dir>/config.json and returns its path.
std::string write_tiny_config(const fs::path& dir, int epochs = 2) {
  auto c = tiny_run((dir / "run").string());
  c.train.epochs = epochs;
  c.dataset_dir = (dir / "data").string();
  cli::write_text(dir / "config.json", train::to_json(c).dump(2));
  return (dir / "config.json").string();
}

int run(const std::function<int()>& body) {
  std::ostringstream err;
  return cli::run_command(body, err);
}

int shell(const std::string& args) {
  const std::string cmd = std::string(I2PREF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, GenDataTrainCompleteEvalMetrics) {
  const auto dir = scratch_dir("cli_flow");
  const auto cfg = write_tiny_config(dir);
  std::ostringstream log;
  cli::GlobalOptions g{cfg, std::nullopt, std::nullopt};

  ASSERT_EQ(cli::cmd_gen_data(g, log), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / train::kManifestName));

  ASSERT_EQ(cli::cmd_train(g, {}, log), 0);
  const fs::path out = dir / "run";
  for (const char* f : {"config.resolved.json", "history.csv", "last.ckpt", "best.ckpt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto history = read_file(out / "history.csv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "epoch,alpha,train_loss,val_cd,val_f1");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  EXPECT_NO_THROW(train::load_run_config((out / "config.resolved.json").string()));

  const auto entry = train::read_manifest(dir / "data").front();
  const fs::path sample = dir / "data" / entry.path;
  cli::CompleteOptions co{(out / "best.ckpt").string(), (sample / "image.png").string(),
                          (sample / "partial.xyz").string(), (dir / "pred.xyz").string(), true};
  ASSERT_EQ(cli::cmd_complete(g, co, log), 0);
  const auto pred = io::read_xyz<float>((dir / "pred.xyz").string());
  EXPECT_EQ(pred.size(), std::size_t(tiny_model().n_coarse()));
  for (int l = 0; l <= tiny_model().refiner.n_stages; ++l)
    EXPECT_TRUE(fs::exists(cli::stage_path(dir / "pred.xyz", l))) << l;
  EXPECT_FALSE(fs::exists(cli::stage_path(dir / "pred.xyz", tiny_model().refiner.n_stages + 1)));
  EXPECT_EQ(read_file(cli::stage_path(dir / "pred.xyz", tiny_model().refiner.n_stages)), read_file(dir / "pred.xyz"));

  cli::EvalOptions eo;
  eo.checkpoint = (out / "best.ckpt").string();
  eo.plots = true;
  std::ostringstream table;
  ASSERT_EQ(cli::cmd_eval(g, eo, table), 0);
  for (const char* cat : {"sphere", "box", "cylinder", "torus", "mean", "CD(x1e3)"})
    EXPECT_NE(table.str().find(cat), std::string::npos) << cat;
  EXPECT_TRUE(fs::exists(out / "eval_test.txt"));
  EXPECT_TRUE(fs::exists(out / "eval_test_categories.svg"));
  EXPECT_TRUE(fs::exists(out / "eval_test_stages.svg"));

  cli::MetricsOptions mo{(dir / "pred.xyz").string(), (sample / "gt.xyz").string(), std::nullopt};
  std::ostringstream metrics;
  ASSERT_EQ(cli::cmd_metrics(g, mo, metrics), 0);
  EXPECT_EQ(metrics.str().rfind("CD ", 0), 0u);
  EXPECT_NE(metrics.str().find("\nF1 "), std::string::npos);
}

TEST(Cli, ResumeContinuesEpochNumbering) {
  const auto dir = scratch_dir("cli_resume");
  const auto cfg2 = write_tiny_config(dir, 2);
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_train({cfg2, std::nullopt, std::nullopt}, {}, log), 0);
  const auto cfg4 = write_tiny_config(dir, 4);
  cli::TrainOptions to;
  to.resume = (dir / "run" / "last.ckpt").string();
  ASSERT_EQ(cli::cmd_train({cfg4, std::nullopt, std::nullopt}, to, log), 0);
  const auto history = read_file(dir / "run" / "history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 5);
  EXPECT_NE(history.find("\n3,"), std::string::npos);
  EXPECT_NE(history.find("\n4,"), std::string::npos);
}

TEST(Cli, GtAsPredScoresPerfectly) {
  const auto dir = scratch_dir("cli_gt");
  const auto cfg = write_tiny_config(dir);
  cli::EvalOptions eo;
  eo.gt_as_pred = true;
  std::ostringstream table;
  ASSERT_EQ(cli::cmd_eval({cfg, std::nullopt, std::nullopt}, eo, table), 0);
  EXPECT_NE(table.str().find("mean              4       0.0000   1.0000"), std::string::npos) << table.str();
}

TEST(Cli, MetricsHandExample) {
  const auto dir = scratch_dir("cli_metrics");
  cli::write_text(dir / "a.xyz", "0 0 0\n");
  cli::write_text(dir / "b.xyz", "# one point\n1 0 0\n");
  std::ostringstream out;
  ASSERT_EQ(cli::cmd_metrics({}, {(dir / "a.xyz").string(), (dir / "b.xyz").string(), std::nullopt}, out), 0);
  EXPECT_EQ(out.str(), "CD 2\nF1 0\n");
}

TEST(Cli, ErrorsMapToExitCodes) {
  const auto dir = scratch_dir("cli_errors");
  cli::write_text(dir / "bad.json", R"({"train": {"epochs": -1}})");
  cli::write_text(dir / "a.xyz", "0 0 0\n");
  cli::write_text(dir / "broken.xyz", "0 0\n");
  const cli::GlobalOptions bad{(dir / "bad.json").string(), std::nullopt, std::nullopt};
  EXPECT_EQ(run([&] { return cli::cmd_train(bad, {}); }), cli::kUsageError);
  cli::TrainOptions wrong_variant;
  wrong_variant.variant = "both";
  EXPECT_EQ(run([&] { return cli::cmd_train({}, wrong_variant); }), cli::kUsageError);
  EXPECT_EQ(run([&] { return cli::cmd_metrics({}, {(dir / "a.xyz").string(), (dir / "a.xyz").string(), 0.0}); }),
            cli::kUsageError);
  EXPECT_EQ(run([&] { return cli::cmd_metrics({}, {(dir / "a.xyz").string(), (dir / "broken.xyz").string(), {}}); }),
            cli::kRuntimeError);
  EXPECT_EQ(run([&] { return cli::cmd_complete({}, {(dir / "missing.ckpt").string(), "x.png", "y.xyz", "z.xyz", false}); }),
            cli::kRuntimeError);
  // Validation happens before any output is written.
  EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(Cli, ExecutableExitCodes) {
  const auto dir = scratch_dir("cli_exe");
  cli::write_text(dir / "a.xyz", "0 0 0\n");
  cli::write_text(dir / "b.xyz", "1 0 0\n");
  cli::write_text(dir / "bad.json", R"({"model": {"refiner": {"heads": 5}}})");
  EXPECT_EQ(shell("metrics --pred " + (dir / "a.xyz").string() + " --gt " + (dir / "b.xyz").string()), 0);
  EXPECT_EQ(shell(""), 1);
  EXPECT_EQ(shell("frobnicate"), 1);
  EXPECT_EQ(shell("metrics --pred " + (dir / "a.xyz").string()), 1);
  EXPECT_EQ(shell("--config " + (dir / "bad.json").string() + " train --out " + (dir / "out").string()), 1);
  EXPECT_EQ(shell("metrics --pred " + (dir / "nope.xyz").string() + " --gt " + (dir / "b.xyz").string()), 2);
  EXPECT_EQ(shell("--help"), 0);
}
