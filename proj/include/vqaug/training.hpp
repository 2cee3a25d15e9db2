#pragma once

// Adversarial training: clean warm-up, a window of epochs where each step
// minimizes the clean loss plus w times four augmented-pair losses, then
// clean fine-tuning. Optimizer is Adamax.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqaug/attack.hpp"
#include "vqaug/dataset.hpp"
#include "vqaug/model.hpp"

namespace vqaug {

/// Raised when a loss or gradient stops being finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrainingMode { kVanilla, kAdversarial };

const char* training_mode_name(TrainingMode mode);
TrainingMode parse_training_mode(const std::string& name);

struct TrainingSchedule {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  double base_lr = 0.001;
  double decay = 0.25;
  std::size_t decay_after = 5;  // last epoch at the base rate
  std::size_t decay_every = 2;
  std::size_t adv_start = 10;   // inclusive
  std::size_t adv_end = 15;     // exclusive
  /// Restart the decay clock at adv_start and adv_end in adversarial mode.
  bool stage_lr = true;
  double adv_weight = 50.0;     // w
  AttackConfig attack = AttackConfig::scaled_default(kReferenceFeatureMax);
  std::size_t paraphrases_per_question = 1;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  void validate() const;
  std::vector<std::string> problems() const;

  /// base_lr through decay_after, then multiplied by decay every decay_every
  /// epochs.
  double lr_at(std::size_t epoch) const;
  /// Rate actually used: lr_at() counted from the start of the current stage
  /// when stage_lr is set, the mode is adversarial, the window is non-empty
  /// and adv_weight is non-zero.
  double lr_for(std::size_t epoch, TrainingMode mode) const;
  bool in_adversarial_period(std::size_t epoch) const {
    return epoch >= adv_start && epoch < adv_end;
  }
};

struct AdamaxState {
  std::vector<Tensor> m;
  std::vector<Tensor> u;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double floor = 1e-8;

  static AdamaxState zeros_like(std::span<const Tensor> params);
};

/// One Adamax update in place. Throws NumericalError, leaving state and
/// params untouched, when any gradient entry is non-finite.
void adamax_step(AdamaxState& state, std::span<Tensor> params, std::span<const Tensor> grads,
                 double lr);

/// Adversarial visuals for one example: v_qc attacks (v, q), one v_qadv per
/// paraphrase attacks (v, q_adv).
struct AugmentedVisuals {
  Tensor v_qc;
  std::vector<Tensor> v_qadv;
};

AugmentedVisuals augmented_pairs(const VqaModelParams& params, const Tensor& v, const Question& q,
                                 std::span<const Question> q_adv, std::size_t true_label,
                                 const AttackConfig& attack, double v_max, std::uint64_t seed);

/// One example with every input of the combined loss. Without paraphrases only the
/// (v_qc, q) term is present.
struct AugmentedExample {
  const Tensor* visual = nullptr;
  const Question* question = nullptr;
  std::size_t answer = 0;
  std::vector<Question> paraphrases;
  AugmentedVisuals adversarial;
};

/// Batch means of the five loss terms, in the order
/// clean, (v_qc,q), (v_qadv,q), (v_qc,q_adv), (v_qadv,q_adv).
struct LossTerms {
  double clean = 0.0;
  std::array<double, 4> adversarial{};

  double adversarial_sum() const;
  double total(double w) const { return clean + w * adversarial_sum(); }
};

LossTerms loss_terms(const VqaModelParams& params, std::span<const AugmentedExample> batch);
double combined_loss(const VqaModelParams& params, std::span<const AugmentedExample> batch,
                     double w);

struct BatchGradient {
  LossTerms terms;
  std::vector<Tensor> grads;
};

/// Gradient of the batch-mean clean loss.
BatchGradient clean_gradient(const VqaModelParams& params, std::span<const VqaTriplet* const> batch,
                             std::size_t workers = 1);
/// Gradient of combined_loss.
BatchGradient combined_gradient(const VqaModelParams& params,
                                std::span<const AugmentedExample> batch, double w,
                                std::size_t workers = 1);

struct EpochLog {
  std::size_t epoch = 0;
  bool adversarial = false;
  double lr = 0.0;
  double clean_loss = 0.0;
  std::array<double, 4> adversarial_loss{};
  double val_accuracy = 0.0;
  std::size_t fallbacks = 0;  // examples trained without a paraphrase
};

struct TrainResult {
  VqaModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Paraphrases are taken from each training example; an example without one
/// falls back to the single (v_qc, q) augmented term.
TrainResult train(const TrainingSchedule& schedule, TrainingMode mode, const ModelDims& dims,
                  const std::vector<VqaTriplet>& train_set, const std::vector<VqaTriplet>& val_set,
                  double v_max, const EpochCallback& on_epoch = {});

void write_epoch_log_csv(std::ostream& out, const std::vector<EpochLog>& log);
std::string epoch_log_csv(const std::vector<EpochLog>& log);

}  // namespace vqaug
