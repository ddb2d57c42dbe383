#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "opforge/harness.hpp"

namespace {

struct ConfigFlags {
  std::string config_path;
  std::string out_dir;
  int64_t seed = -1;
  int resplits = 0;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Experiment config JSON");
  cmd->add_option("--out", flags.out_dir, "Artifact output directory");
  cmd->add_option("--seed", flags.seed, "Override the dataset and trainer seeds");
  cmd->add_option("--resplits", flags.resplits, "Repeat over n dataset re-splits");
}

opforge::ExperimentConfig make_config(const ConfigFlags& flags) {
  opforge::ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = opforge::ExperimentConfig::load_file(flags.config_path);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed >= 0) {
    cfg.dataset.seed = static_cast<uint64_t>(flags.seed);
    cfg.trainer.seed = static_cast<uint64_t>(flags.seed);
  }
  if (flags.resplits > 0) cfg.dataset.resplits = flags.resplits;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opforge: forge processed-image datasets and train the residual CNN identifier"};
  app.require_subcommand(1);

  ConfigFlags forge_flags, train_flags, eval_flags, ablate_flags;

  CLI::App* forge = app.add_subcommand("forge", "Forge the labeled dataset; write images plus manifest");
  add_config_flags(forge, forge_flags);

  CLI::App* train = app.add_subcommand("train", "Forge, train, evaluate, and write experiment artifacts");
  add_config_flags(train, train_flags);

  std::string checkpoint_path;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint on a freshly forged test split");
  add_config_flags(eval, eval_flags);
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

  std::string axis;
  CLI::App* ablate = app.add_subcommand("ablate", "Train every variant along one architecture axis");
  add_config_flags(ablate, ablate_flags);
  ablate->add_option("--axis", axis, "hpf | expansion | last_pool | activation")->required();

  uint64_t gc_seed = 1;
  int gc_rounds = 20;
  bool gc_selftest = false;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks over every layer type");
  gradcheck->add_option("--seed", gc_seed, "Base seed (printed for replay)");
  gradcheck->add_option("--rounds", gc_rounds, "Random trials per layer");
  gradcheck->add_flag("--selftest", gc_selftest, "Inject a known gradient bug; succeed only if the suite catches it");

  int64_t shapes_size = 256;
  int64_t shapes_width = 32;
  int64_t shapes_classes = 12;
  CLI::App* shapes = app.add_subcommand("shapes", "Print the layer-by-layer shape report");
  shapes->add_option("--size", shapes_size, "Input size M (square, multiple of 32)");
  shapes->add_option("--base-width", shapes_width, "Channels after the expansion layer");
  shapes->add_option("--classes", shapes_classes, "Output class count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*forge) {
      const auto cfg = make_config(forge_flags);
      const std::string hash = opforge::run_forge(cfg);
      std::cout << "forged dataset at " << cfg.out_dir << " manifest_hash=" << hash << "\n";
    } else if (*train) {
      const auto cfg = make_config(train_flags);
      const auto result = opforge::run_experiment(cfg);
      std::cout << "trained " << result.report.epochs.size() << " epochs, stop=" << result.report.stop_reason
                << ", validation=" << result.report.final_validation_accuracy() << ", test=" << result.test_accuracy
                << (result.stalled ? " (stalled)" : "") << "\n";
    } else if (*eval) {
      const auto cfg = make_config(eval_flags);
      const double accuracy = opforge::run_eval(cfg, checkpoint_path);
      std::cout << "test accuracy " << accuracy << "\n";
    } else if (*ablate) {
      const auto cfg = make_config(ablate_flags);
      const auto report = opforge::run_ablation(cfg, axis);
      for (const auto& v : report.variants)
        std::cout << report.axis << "/" << v.name << ": " << v.status
                  << " validation=" << v.final_validation_accuracy << " test=" << v.test_accuracy << "\n";
    } else if (*gradcheck) {
      if (gc_selftest) {
        const auto broken = opforge::run_gradcheck(gc_seed, 2, true);
        const bool caught =
            std::any_of(broken.begin(), broken.end(), [](const auto& r) { return r.layer == "conv2d" && !r.pass; });
        std::cout << (caught ? "selftest: injected conv2d gradient bug detected\n"
                             : "selftest: injected gradient bug NOT detected\n");
        return caught ? 0 : 1;
      }
      const auto results = opforge::run_gradcheck(gc_seed, gc_rounds);
      std::cout << opforge::format_gradcheck(results);
      for (const auto& r : results)
        if (!r.pass) return 1;
    } else if (*shapes) {
      opforge::ArchitectureConfig cfg;
      cfg.input_size = shapes_size;
      cfg.base_width = shapes_width;
      cfg.num_classes = shapes_classes;
      cfg.validate();
      std::cout << opforge::format_shape_report(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "opforge: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
