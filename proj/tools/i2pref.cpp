// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include "i2pref/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace i2pref::cli;
  CLI::App app{"i2pref: image-guided point cloud completion"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  GlobalOptions g;
  std::string config, out;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Override the seed of the command");
  auto* out_opt = app.add_option("--out", out, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");

  TrainOptions to;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--variant", to.variant, "full, no-recon, i2p-only or p2p-only");
  tr->add_option("--resume", to.resume, "Checkpoint to resume from");
  tr->add_option("--data", to.data, "Dataset directory (overrides data.dir)");

  CompleteOptions co;
  auto* cp = app.add_subcommand("complete", "Complete one partial cloud");
  cp->add_option("--checkpoint", co.checkpoint, "Trained checkpoint")->required();
  cp->add_option("--image", co.image, "Input image (PNG)")->required();
  cp->add_option("--partial", co.partial, "Partial cloud (.xyz)")->required();
  cp->add_option("--output", co.output, "Completed cloud (.xyz)")->required();
  cp->add_flag("--trace", co.trace, "Also write every refinement stage");

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev->add_option("--checkpoint", eo.checkpoint, "Trained checkpoint");
  ev->add_option("--data", eo.data, "Dataset directory (overrides data.dir)");
  ev->add_option("--split", eo.split, "train, val or test")->capture_default_str();
  ev->add_flag("--plots", eo.plots, "Write SVG plots next to the report");
  ev->add_flag("--gt-as-pred", eo.gt_as_pred, "Debug: score the ground truth against itself");

  MetricsOptions mo;
  double tau = 0;
  auto* me = app.add_subcommand("metrics", "Chamfer distance and F-score between two clouds");
  me->add_option("--pred", mo.pred, "Predicted cloud (.xyz)")->required();
  me->add_option("--gt", mo.gt, "Ground-truth cloud (.xyz)")->required();
  auto* tau_opt = me->add_option("--tau", tau, "F-score squared-distance threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }
  if (*config_opt) g.config = config;
  if (*seed_opt) g.seed = seed;
  if (*out_opt) g.out = out;
  if (*tau_opt) mo.tau = tau;

  if (*gen) return run_command([&] { return cmd_gen_data(g); });
  if (*tr) return run_command([&] { return cmd_train(g, to); });
  if (*cp) return run_command([&] { return cmd_complete(g, co); });
  if (*ev) return run_command([&] { return cmd_eval(g, eo); });
  if (*me) return run_command([&] { return cmd_metrics(g, mo); });
  return kUsageError;
}
