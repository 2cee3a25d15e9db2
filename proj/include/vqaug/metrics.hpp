#pragma once

// Accuracy, flip rate, robustness reports and the ablation harnesses.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vqaug/attack.hpp"
#include "vqaug/dataset.hpp"
#include "vqaug/model.hpp"
#include "vqaug/training.hpp"

namespace vqaug {

/// Fraction of exact matches; throws std::invalid_argument on length mismatch.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> answers);

/// Fraction of positions where the two prediction lists differ.
double flip_rate(std::span<const std::size_t> on_question, std::span<const std::size_t> on_paraphrase);

std::vector<std::size_t> predict_all(const VqaModelParams& params,
                                     const std::vector<VqaTriplet>& examples,
                                     std::size_t workers = 1);

/// Question actually asked for an example: its first stored paraphrase, or
/// the original question when none exists.
const Question& paraphrase_or_original(const VqaTriplet& example);

/// Predictions on attacked visuals. With against_paraphrase the attack and
/// the prediction both use paraphrase_or_original().
std::vector<std::size_t> attacked_predictions(const VqaModelParams& params,
                                              const std::vector<VqaTriplet>& examples,
                                              const AttackConfig& attack, double v_max,
                                              std::uint64_t seed, bool against_paraphrase,
                                              std::size_t workers = 1);

struct AttackerResult {
  AttackConfig config;
  double accuracy = 0.0;           // attacked visuals, original question
  double combined_accuracy = 0.0;  // attacked visuals, paraphrased question
};

struct EvalReport {
  std::string model;
  std::size_t examples = 0;
  std::size_t paraphrased = 0;  // examples that carry a paraphrase
  double clean_accuracy = 0.0;
  double paraphrase_accuracy = 0.0;
  /// Over examples that carry a paraphrase; 0 when none does.
  double flip_rate = 0.0;
  std::vector<AttackerResult> attackers;
  std::string config_echo;
};

EvalReport robustness_report(const VqaModelParams& params, const std::vector<VqaTriplet>& examples,
                             const std::vector<AttackConfig>& attackers, double v_max,
                             std::uint64_t seed, std::size_t workers = 1);

/// One row per (model, attacker) cell; the first row of each report is the
/// unattacked cell.
void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports);
std::string report_csv(const std::vector<EvalReport>& reports);

struct AblationRow {
  double fraction = 0.0;
  std::size_t train_examples = 0;
  double vanilla_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
};

/// Trains both regimes on the leading fraction of the training split with
/// shared seeds and reports validation accuracy.
std::vector<AblationRow> training_size_ablation(const std::vector<double>& fractions,
                                                const TrainingSchedule& schedule,
                                                const Dataset& data, const ModelDims& dims);

struct SweepCell {
  AttackKind kind = AttackKind::kIfgsm;
  double epsilon = 0.0;
  double alpha = 0.0;
  std::size_t iterations = 1;
};

/// Cartesian product of kinds, epsilons and alphas. FGSM and noise ignore
/// alpha, so they contribute one cell per epsilon.
std::vector<SweepCell> sweep_grid(std::span<const AttackKind> kinds,
                                  std::span<const double> epsilons, std::span<const double> alphas,
                                  std::size_t iterations);

AttackConfig to_attack(const SweepCell& cell, LabelPolicy policy);

/// Attacked accuracy of one model for every cell. Cell c is seeded like
/// attacker c of robustness_report().
std::vector<double> attacker_sweep(const VqaModelParams& params,
                                   const std::vector<VqaTriplet>& examples,
                                   std::span<const SweepCell> cells, LabelPolicy policy,
                                   double v_max, std::uint64_t seed, std::size_t workers = 1);

}  // namespace vqaug
