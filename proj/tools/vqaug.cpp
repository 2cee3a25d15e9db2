#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vqaug/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> fraction;
  std::optional<std::string> mode;
  std::vector<std::string> sets;
};

vqaug::RunConfig resolve(const Flags& f) {
  std::vector<std::string> overrides = f.sets;
  if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
  if (f.out) overrides.push_back("out=" + nlohmann::json(*f.out).dump());
  if (f.fraction) overrides.push_back("fraction=" + nlohmann::json(*f.fraction).dump());
  return vqaug::load_config(f.config, overrides);
}

void print_epoch(const vqaug::EpochLog& e) {
  std::fprintf(stderr, "epoch %2zu %-11s lr %.3g clean %.4f adv %.4f val %.4f\n", e.epoch,
               e.adversarial ? "adversarial" : "clean", e.lr, e.clean_loss,
               e.adversarial_loss[0] + e.adversarial_loss[1] + e.adversarial_loss[2] +
                   e.adversarial_loss[3],
               e.val_accuracy);
}

int run(const std::string& command, const Flags& flags) {
  using namespace vqaug;
  const RunConfig config = resolve(flags);
  if (command == "generate") {
    const auto r = cmd_generate(config);
    std::printf("train %zu examples sha256 %s\nval %zu examples sha256 %s\nmanifest %s\n",
                r.train_examples, r.train_sha256.c_str(), r.val_examples, r.val_sha256.c_str(),
                r.manifest.string().c_str());
  } else if (command == "paraphrase") {
    const auto r = cmd_paraphrase(config);
    std::printf("coverage %zu/%zu (%.2f%%), %zu fallbacks\ncache %s\n", r.covered, r.examples,
                100.0 * r.coverage(), r.examples - r.covered, r.cache.string().c_str());
  } else if (command == "train") {
    const auto mode = parse_training_mode(flags.mode.value_or("vanilla"));
    const auto r = cmd_train(config, mode, print_epoch);
    std::printf("final val accuracy %.4f\ncheckpoint %s\nlog %s\n", r.final_val_accuracy,
                r.checkpoint.string().c_str(), r.epoch_log.string().c_str());
  } else if (command == "evaluate") {
    std::vector<TrainingMode> modes;
    if (flags.mode) {
      modes.push_back(parse_training_mode(*flags.mode));
    } else {
      const RunPaths paths{config.out};
      for (auto m : {TrainingMode::kVanilla, TrainingMode::kAdversarial}) {
        if (std::filesystem::exists(paths.checkpoint(m))) modes.push_back(m);
      }
      if (modes.empty()) {
        throw std::runtime_error("no checkpoint under " + config.out.string() +
                                 "; run the 'train' command first");
      }
    }
    const auto reports = cmd_evaluate(config, modes);
    std::cout << report_csv(reports);
  } else if (command == "sweep") {
    const auto r = cmd_sweep(config, [](const std::string& cell) {
      std::fprintf(stderr, "cell %s\n", cell.c_str());
    });
    std::printf("%zu cells computed, %zu already present\nsweep %s\n", r.computed, r.skipped,
                r.csv.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial visual and paraphrase augmentation for toy VQA"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Root seed");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--fraction", flags.fraction, "Share of the training split to keep")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--mode", flags.mode, "Training regime")
      ->check(CLI::IsMember({"vanilla", "adversarial"}));
  app.add_option("--set", flags.sets, "Override a config key: key=value (repeatable)")
      ->allow_extra_args(false);

  std::string command;
  const std::pair<const char*, const char*> commands[] = {
      {"generate", "Generate the synthetic dataset and its manifest"},
      {"paraphrase", "Build lexicons and the paraphrase cache"},
      {"train", "Train one model and write its checkpoint and epoch log"},
      {"evaluate", "Write the robustness report for trained checkpoints"},
      {"sweep", "Run the configured attacker, period and fraction grids"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->fallthrough()->callback([&command, n = name] { command = n; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    return run(command, flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
