#pragma once

// Run configuration: one JSON document with dotted-key overrides.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqaug/attack.hpp"
#include "vqaug/dataset.hpp"
#include "vqaug/paraphrase.hpp"
#include "vqaug/training.hpp"

namespace vqaug {

struct SweepSpec {
  std::vector<AttackKind> kinds{AttackKind::kIfgsm};
  /// In reference units; multiplied by v_max / 83 before use.
  std::vector<double> epsilons{0.3, 0.5, 1.0, 1.3};
  std::vector<double> alphas{0.0625};
  std::size_t iterations = 2;
  /// Adversarial training periods to compare; empty skips the period grid.
  std::vector<std::pair<std::size_t, std::size_t>> periods;
  /// Training-set fractions to compare; empty skips the size grid.
  std::vector<double> fractions;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";
  /// Share of the generated training split that is kept.
  double fraction = 1.0;
  WorldSpec world = WorldSpec::defaults();
  std::size_t d_emb = 16;
  std::size_t d_hidden = 32;
  TrainingSchedule training;
  /// Test-time attackers, budgets in feature units.
  std::vector<AttackConfig> attackers;
  ParaphraseSettings paraphrase;
  /// Two lexicon files; empty paths mean "build the toy lexicons".
  std::vector<std::filesystem::path> lexicons{"", ""};
  std::size_t workers = 1;
  SweepSpec sweep;

  static RunConfig defaults();

  /// Every problem at once; empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;

  /// Sub-seeds derived from the root seed.
  std::uint64_t world_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t lexicon_seed() const;
  std::uint64_t eval_seed() const;

  /// World spec with its seed replaced by world_seed().
  WorldSpec resolved_world() const;
  /// Training schedule with seed and worker count filled in.
  TrainingSchedule resolved_training() const;
};

nlohmann::json to_json_value(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

/// "a.b.c=value" applied to a JSON document. The value is parsed as JSON
/// when possible, otherwise taken as a string. Intermediate objects must
/// already exist, so typos are reported instead of silently added.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults, then the file (if any), then overrides, then validation.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

nlohmann::json attack_to_json(const AttackConfig& c);
AttackConfig attack_from_json(const nlohmann::json& j);

}  // namespace vqaug
