#pragma once

// The five pipeline commands. Every command validates its configuration
// before touching the output directory.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vqaug/config.hpp"
#include "vqaug/dataset.hpp"
#include "vqaug/metrics.hpp"
#include "vqaug/training.hpp"

namespace vqaug {

/// File layout under RunConfig::out.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path train_split() const { return root / "data" / "train.bin"; }
  std::filesystem::path val_split() const { return root / "data" / "val.bin"; }
  std::filesystem::path manifest() const { return root / "data" / "manifest.json"; }
  std::filesystem::path lexicon(std::size_t i) const;
  std::filesystem::path paraphrase_cache() const { return root / "paraphrases.jsonl"; }
  std::filesystem::path checkpoint(TrainingMode mode) const;
  std::filesystem::path epoch_log(TrainingMode mode) const;
  std::filesystem::path report() const { return root / "report.csv"; }
  std::filesystem::path sweep() const { return root / "sweep.csv"; }
};

struct GenerateResult {
  std::size_t train_examples = 0;
  std::size_t val_examples = 0;
  std::string train_sha256;
  std::string val_sha256;
  std::filesystem::path manifest;
};

GenerateResult cmd_generate(const RunConfig& config);

/// Both splits as written by cmd_generate.
Dataset load_dataset(const RunPaths& paths);

struct ParaphraseResult {
  std::size_t examples = 0;
  std::size_t covered = 0;  // examples with at least one usable paraphrase
  double coverage() const {
    return examples == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(examples);
  }
  std::filesystem::path cache;
};

ParaphraseResult cmd_paraphrase(const RunConfig& config);

struct TrainCommandResult {
  std::filesystem::path checkpoint;
  std::filesystem::path epoch_log;
  double final_val_accuracy = 0.0;
  std::size_t paraphrased_examples = 0;
};

TrainCommandResult cmd_train(const RunConfig& config, TrainingMode mode,
                             const EpochCallback& on_epoch = {});

/// Evaluates the checkpoints of the given modes on the validation split.
std::vector<EvalReport> cmd_evaluate(const RunConfig& config,
                                     const std::vector<TrainingMode>& modes);

/// Rejects a checkpoint whose dimensions or vocabularies differ from the
/// dataset's, naming both.
void check_compatible(const Checkpoint& checkpoint, const Dataset& data,
                      const std::filesystem::path& checkpoint_path);

struct SweepResult {
  std::size_t computed = 0;
  std::size_t skipped = 0;  // cells already present in the CSV
  std::filesystem::path csv;
};

/// Attacker grid against every available checkpoint, then one training run
/// per period and per fraction. Rows already present are kept.
SweepResult cmd_sweep(const RunConfig& config,
                      const std::function<void(const std::string&)>& on_cell = {});

inline constexpr const char* kSweepHeader =
    "grid,model,period_start,period_end,fraction,kind,epsilon,alpha,iterations,"
    "clean_accuracy,attacked_accuracy";

}  // namespace vqaug
