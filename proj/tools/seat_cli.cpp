#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "seat/config.hpp"
#include "seat/errors.hpp"
#include "seat/harness.hpp"

namespace {

// precedence: defaults < config file < SEAT_OUT_DIR < --set
seat::RunConfig build_config(const std::string& config_path,
                             const std::vector<std::string>& sets) {
  seat::RunConfig cfg = config_path.empty() ? seat::RunConfig::from_defaults()
                                            : seat::RunConfig::from_file(config_path);
  if (const char* env = std::getenv("SEAT_OUT_DIR"); env != nullptr && *env != '\0')
    cfg.out_dir = env;
  cfg.apply_overrides(sets);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"train a small attention classifier, fit a stable replacement scorer, "
               "and run the evaluation suites"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--set", sets, "override a single key, KEY=VALUE (repeatable)");

  auto* gen_data = app.add_subcommand("gen-data", "write the synthetic corpus to the run directory");
  auto* train_base = app.add_subcommand("train-base", "train the vanilla classifier");
  auto* train_seat = app.add_subcommand("train-seat", "fit the stable replacement scorer");

  std::string method;
  auto* train_baseline = app.add_subcommand("train-baseline", "train a robustness baseline scorer");
  train_baseline->add_option("--method", method, "rp | at")->required();

  std::string which = "all";
  auto* eval = app.add_subcommand("eval", "run an evaluation suite");
  eval->add_option("--which", which,
                   "stability-embedding | stability-word | interpretability | certify | "
                   "seed-study | ablation | all");

  auto* certify = app.add_subcommand("certify", "estimate the stability certificate");
  auto* ablation = app.add_subcommand("ablation", "retrain with objective terms toggled");
  auto* seed_study = app.add_subcommand("seed-study", "retrain across seeds, compare attention");
  auto* pipeline = app.add_subcommand("pipeline", "train everything, then run every suite");

  CLI11_PARSE(app, argc, argv);

  try {
    const seat::RunConfig cfg = build_config(config_path, sets);
    if (gen_data->parsed()) seat::cmd_gen_data(cfg);
    if (train_base->parsed()) seat::cmd_train_base(cfg);
    if (train_seat->parsed()) seat::cmd_train_seat(cfg);
    if (train_baseline->parsed()) seat::cmd_train_baseline(cfg, method);
    if (eval->parsed()) seat::cmd_eval(cfg, which);
    if (certify->parsed()) seat::cmd_certify(cfg);
    if (ablation->parsed()) seat::cmd_ablation(cfg);
    if (seed_study->parsed()) seat::cmd_seed_study(cfg);
    if (pipeline->parsed()) seat::run_full_pipeline(cfg);
  } catch (const seat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const seat::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const seat::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
