// icl-distill: data generation, teacher preparation, in-context tuning with
// optional distillation, evaluation, and method/ablation comparison grids.
//
// All progress goes to stderr; machine-readable outputs land in the
// experiment directory (metrics.jsonl, report.json, compare.json, ...).

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icld/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"in-context learning distillation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> raw_overrides;
  std::string out_dir, method, seed;
  bool force = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
    cmd->add_option("--seed", seed, "override the experiment seed");
    cmd->add_option("--out", out_dir, "override the output directory");
    cmd->add_option("--method", method, "override kd.method");
    cmd->add_option("--override", raw_overrides, "extra key=value overrides (dotted keys)");
    cmd->add_flag("--force", force, "skip the config fingerprint check");
  };

  for (const char* name : {"gen-data", "pretrain", "train", "eval", "compare"})
    add_common(app.add_subcommand(name));

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    icld::Overrides overrides;
    if (!seed.empty()) overrides.emplace_back("seed", seed);
    if (!out_dir.empty()) overrides.emplace_back("out", out_dir);
    if (!method.empty()) overrides.emplace_back("kd.method", method);
    for (const std::string& kv : raw_overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --override expects key=value, got '" << kv << "'\n";
        return 2;
      }
      overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    icld::ExperimentConfig cfg = icld::load_config(config_path, overrides);
    return icld::run_command(command, cfg, force);
  } catch (const icld::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
