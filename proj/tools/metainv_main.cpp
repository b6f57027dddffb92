#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "metainv/experiments.hpp"

namespace {

struct SubArgs {
  std::string config_path;
  std::int64_t seed = -1;
  std::string out_dir;
};

void add_subcommand(CLI::App& app, const std::string& name, const std::string& desc,
                    SubArgs& args, std::string& selected) {
  CLI::App* sub = app.add_subcommand(name, desc);
  sub->add_option("--config", args.config_path, "TOML experiment configuration")
      ->required();
  sub->add_option("--seed", args.seed, "override the configured seed");
  sub->add_option("--out", args.out_dir, "override the configured output directory");
  sub->callback([&selected, name]() { selected = name; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metainv: meta-learning for linear inverse imaging problems"};
  app.require_subcommand(1);

  SubArgs args;
  std::string selected;
  add_subcommand(app, "toy", "Gaussian-prior toy study with a linear model", args, selected);
  add_subcommand(app, "train", "multi-task meta-training", args, selected);
  add_subcommand(app, "finetune", "adapt a checkpoint to one task", args, selected);
  add_subcommand(app, "eval", "evaluate a checkpoint without adaptation", args, selected);
  add_subcommand(app, "bayes-check", "estimator vs conditioning-oracle sweep", args, selected);

  CLI11_PARSE(app, argc, argv);

  metainv::ExperimentConfig cfg;
  try {
    cfg = metainv::load_config(args.config_path);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (cfg.kind != selected)
      throw metainv::ConfigError("config kind '" + cfg.kind + "' does not match subcommand '" +
                                 selected + "'");
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    metainv::run_experiment(cfg);
  } catch (const metainv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  std::cout << "done: " << cfg.kind << " -> " << cfg.output_dir << "\n";
  return 0;
}
