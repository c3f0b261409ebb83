// Command-line front end for the V2X resource-allocation experiments:
// training, greedy evaluation, attribution-based feature ranking, iterative
// feature selection, retraining of the simplified agents, reporting and
// parameter sweeps.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "v2x/config.hpp"
#include "v2x/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string scale = "desk";
  std::uint64_t seed = 0;
  bool seed_set = false;
  double delta = 0.0;
  bool delta_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "artifact directory (overrides config)");
  cmd->add_option("--seed", opts.seed, "master seed (overrides config)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--delta", opts.delta,
                  "precision threshold (overrides config)")
      ->each([&opts](const std::string&) { opts.delta_set = true; });
  cmd->add_option("--scale", opts.scale, "desk or paper scale")
      ->check(CLI::IsMember({"desk", "paper"}));
}

v2x::ExperimentConfig resolve(const CommonOpts& opts) {
  v2x::ExperimentConfig cfg = v2x::load_config(opts.config_path);
  cfg.apply_scale(opts.scale);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed_set) cfg.master_seed = opts.seed;
  if (opts.delta_set) cfg.delta = opts.delta;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"V2X spectrum/power allocation with attribution-guided "
               "feature selection"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string eval_scheme = "original";
  std::string sweep_axis;

  CLI::App* train = app.add_subcommand("train", "run centralized training");
  CLI::App* eval = app.add_subcommand("eval", "greedy evaluation of a scheme");
  eval->add_option("--scheme", eval_scheme,
                   "original|simplified|random|full_power|sadrl");
  CLI::App* explain =
      app.add_subcommand("explain", "attribution-based feature ranking");
  CLI::App* select =
      app.add_subcommand("select", "iterative masking-based feature selection");
  CLI::App* retrain =
      app.add_subcommand("retrain", "retrain on the retained features");
  CLI::App* report = app.add_subcommand("report", "comparison report");
  CLI::App* sweep = app.add_subcommand("sweep", "axis sweep");
  sweep->add_option("--axis", sweep_axis, "delta|speed|vehicle_count|eps_max")
      ->required();
  CLI::App* run = app.add_subcommand("run", "full pipeline end to end");

  for (CLI::App* cmd : {train, eval, explain, select, retrain, report, sweep, run})
    add_common(cmd, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const v2x::ExperimentConfig cfg = resolve(opts);
    if (train->parsed()) v2x::stage_train(cfg);
    if (eval->parsed()) v2x::stage_eval(cfg, eval_scheme);
    if (explain->parsed()) v2x::stage_explain(cfg);
    if (select->parsed()) {
      const v2x::SelectionResult sel = v2x::stage_select(cfg);
      std::printf("retained %zu of %zu features (p_stop=%d)\n",
                  sel.retained.size(),
                  sel.retained.size() + sel.eliminated.size(), sel.p_stop);
    }
    if (retrain->parsed()) v2x::stage_retrain(cfg);
    if (report->parsed()) v2x::stage_report(cfg);
    if (sweep->parsed()) v2x::stage_sweep(cfg, sweep_axis);
    if (run->parsed()) v2x::run_pipeline(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
