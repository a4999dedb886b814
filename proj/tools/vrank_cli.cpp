// Command-line entry point: dataset simulation, training, offline/online
// evaluation, hyperparameter sweeps and the reference-implementation
// verification suite.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "vrank/config.hpp"
#include "vrank/harness.hpp"
#include "vrank/verify.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string algo;
  std::string out;
  std::string checkpoint;
  std::int64_t seed = -1;
};

vrank::ExperimentConfig resolve_config(const CommonFlags& flags) {
  vrank::Config cfg;
  if (!flags.config_path.empty()) cfg = vrank::Config::parse_file(flags.config_path);
  if (!flags.algo.empty()) cfg.set("train.algo", flags.algo);
  if (!flags.out.empty()) cfg.set("out", flags.out);
  if (flags.seed >= 0) cfg.set("seeds", std::to_string(flags.seed));
  return vrank::ExperimentConfig::from_config(cfg);
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_checkpoint = false) {
  cmd->add_option("--config", flags.config_path, "Key-value config file");
  cmd->add_option("--algo", flags.algo, "Training algorithm (overrides config)");
  cmd->add_option("--out", flags.out, "Output directory (overrides config)");
  cmd->add_option("--seed", flags.seed, "Single seed (overrides the config seed list)");
  if (with_checkpoint) {
    cmd->add_option("--checkpoint", flags.checkpoint, "Explicit checkpoint path");
  }
}

void print_metrics(const std::string& label, const vrank::harness::AggregatedMetrics& agg) {
  std::cout << label << " (mean +/- std over " << agg.per_seed.size() << " seed"
            << (agg.per_seed.size() == 1 ? "" : "s") << ")\n";
  for (const auto& [key, mean] : agg.mean) {
    std::cout << "  " << key << " = " << vrank::fmt_g17(mean) << " +/- "
              << vrank::fmt_g17(agg.std.at(key)) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline reinforcement-learning-to-rank toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  bool resume = false;

  auto* simulate = app.add_subcommand("simulate", "Generate a logged dataset from the simulator");
  add_common(simulate, flags);

  auto* trainc = app.add_subcommand("train", "Train the configured algorithm on the dataset");
  add_common(trainc, flags);
  trainc->add_flag("--resume", resume, "Continue from the run directory checkpoint");

  auto* evalc = app.add_subcommand("eval", "Ranking metrics on the held-out test split");
  add_common(evalc, flags, true);

  auto* onlinec = app.add_subcommand("online", "Online rollout: CTR and coverage");
  add_common(onlinec, flags, true);

  auto* biasc = app.add_subcommand("bias", "Value-head overestimation bias on the test split");
  add_common(biasc, flags, true);

  auto* sweepc = app.add_subcommand("sweep", "Train/evaluate over a hyperparameter grid");
  add_common(sweepc, flags);

  auto* verifyc = app.add_subcommand("verify", "Run the reference-implementation property suite");
  add_common(verifyc, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto cfg = resolve_config(flags);
      const auto res = vrank::harness::cmd_simulate(cfg);
      std::cout << "wrote " << res.sessions << " sessions (" << res.transitions
                << " transitions) to " << res.log_path << '\n'
                << "manifest: " << res.manifest_path << '\n';
    } else if (trainc->parsed()) {
      const auto cfg = resolve_config(flags);
      for (std::uint64_t seed : cfg.seeds) {
        const auto art = vrank::harness::cmd_train(cfg, seed, resume);
        const auto& trace = art.result.trace;
        std::cout << vrank::algo_name(cfg.algo) << " seed " << seed << ": " << trace.size()
                  << " epoch(s), checkpoint " << art.checkpoint_path << '\n';
        if (!trace.empty()) {
          std::cout << "  last: "
                    << vrank::harness::record_line(
                           vrank::harness::epoch_to_record(cfg.algo, seed, trace.back()))
                    << '\n';
        }
      }
    } else if (evalc->parsed()) {
      const auto cfg = resolve_config(flags);
      print_metrics("eval", vrank::harness::cmd_eval(cfg, flags.checkpoint));
    } else if (onlinec->parsed()) {
      const auto cfg = resolve_config(flags);
      print_metrics("online", vrank::harness::cmd_online(cfg, flags.checkpoint));
    } else if (biasc->parsed()) {
      const auto cfg = resolve_config(flags);
      print_metrics("bias", vrank::harness::cmd_bias(cfg, flags.checkpoint));
    } else if (sweepc->parsed()) {
      const auto cfg = resolve_config(flags);
      const std::string csv = vrank::harness::cmd_sweep(cfg);
      std::cout << "sweep over " << cfg.sweep_param << " written to " << csv << '\n';
    } else if (verifyc->parsed()) {
      bool all_pass = true;
      for (const auto& res : vrank::verify::run_all()) {
        std::cout << (res.pass ? "[PASS] " : "[FAIL] ") << res.name << ": " << res.detail << '\n';
        all_pass = all_pass && res.pass;
      }
      return all_pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
