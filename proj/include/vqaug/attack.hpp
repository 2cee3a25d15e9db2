#pragma once

// Gradient-sign attacks on visual features under an L-infinity budget.
//
// All attacks work against a VisualGradientFn so they can target any
// differentiable loss; the VqaModelParams overloads bind the toy model.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "vqaug/model.hpp"
#include "vqaug/tensor.hpp"

namespace vqaug {

enum class AttackKind { kFgsm, kIfgsm, kPgd, kNoise };
enum class LabelPolicy { kTrueLabel, kPredictedLabel };

const char* attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);
const char* label_policy_name(LabelPolicy policy);
LabelPolicy parse_label_policy(const std::string& name);

/// Reference scale of the original feature range; budgets quoted in those
/// units are rescaled by v_max / kReferenceFeatureMax.
inline constexpr double kReferenceFeatureMax = 83.0;

struct AttackConfig {
  AttackKind kind = AttackKind::kIfgsm;
  double epsilon = 0.3;      // L-inf budget; for kNoise the gaussian sigma
  double alpha = 0.0625;     // step size of iterative kinds
  std::size_t iterations = 2;
  LabelPolicy label_policy = LabelPolicy::kTrueLabel;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::string label() const;

  /// eps=0.3, alpha=0.0625, n=2 rescaled to a [0, v_max] feature range.
  static AttackConfig scaled_default(double v_max);
  /// The stronger evaluation attacker: pgd, eps=0.5, alpha=0.125, n=6, rescaled.
  static AttackConfig scaled_strong_pgd(double v_max);
};

double rescale_budget(double value, double v_max);

/// Perturbed features plus the clean features they were derived from.
struct AdversarialVisual {
  Tensor perturbed;
  Tensor original;

  double linf_distance() const;
};

/// Gradient of the attacked loss with respect to the visual features.
using VisualGradientFn = std::function<Tensor(const Tensor&)>;

VisualGradientFn model_gradient_fn(const VqaModelParams& params, const Question& q,
                                   std::size_t label);

double sign(double x);

/// v + eps * sign(grad L(v)), clamped to [0, v_max].
AdversarialVisual fgsm(const VisualGradientFn& grad, const Tensor& v, double epsilon,
                       double v_max);

/// n steps of size alpha from `start`, each clipped to the eps-ball around v
/// and to [0, v_max].
AdversarialVisual projected_sign_ascent(const VisualGradientFn& grad, const Tensor& v,
                                        const Tensor& start, double epsilon, double alpha,
                                        std::size_t n, double v_max);

AdversarialVisual ifgsm(const VisualGradientFn& grad, const Tensor& v, double epsilon,
                        double alpha, std::size_t n, double v_max);

/// Uniform start inside the eps-ball (clamped to the feature range).
Tensor pgd_start(const Tensor& v, double epsilon, std::uint64_t seed, double v_max);

AdversarialVisual pgd(const VisualGradientFn& grad, const Tensor& v, double epsilon,
                      double alpha, std::size_t n, std::uint64_t seed, double v_max);

/// v + N(0, sigma^2) per element, clamped to [0, v_max]. No gradient used.
AdversarialVisual random_noise(const Tensor& v, double sigma, std::uint64_t seed, double v_max);

std::size_t resolve_label(const VqaModelParams& params, const Tensor& v, const Question& q,
                          std::size_t true_label, LabelPolicy policy);

/// Runs the configured attack against the model. The label is resolved once
/// from the clean input and held fixed across iterations. `seed` overrides
/// config.seed for the random kinds.
AdversarialVisual run_attack(const VqaModelParams& params, const Tensor& v, const Question& q,
                             std::size_t true_label, const AttackConfig& config, double v_max,
                             std::uint64_t seed);

}  // namespace vqaug
