#include "vqaug/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vqaug/rng.hpp"

namespace vqaug {

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kIfgsm: return "ifgsm";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kNoise: return "noise";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "fgsm") return AttackKind::kFgsm;
  if (name == "ifgsm") return AttackKind::kIfgsm;
  if (name == "pgd") return AttackKind::kPgd;
  if (name == "noise") return AttackKind::kNoise;
  throw std::invalid_argument("unknown attack kind '" + name + "'");
}

const char* label_policy_name(LabelPolicy policy) {
  return policy == LabelPolicy::kTrueLabel ? "true" : "predicted";
}

LabelPolicy parse_label_policy(const std::string& name) {
  if (name == "true" || name == "true-label") return LabelPolicy::kTrueLabel;
  if (name == "predicted" || name == "predicted-label") return LabelPolicy::kPredictedLabel;
  throw std::invalid_argument("unknown label policy '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("attack epsilon must be finite and >= 0");
  }
  const bool iterative = kind == AttackKind::kIfgsm || kind == AttackKind::kPgd;
  if (iterative && !(alpha > 0.0)) {
    throw std::invalid_argument("attack alpha must be > 0 for iterative attacks");
  }
  if (iterations < 1) throw std::invalid_argument("attack iterations must be >= 1");
}

std::string AttackConfig::label() const {
  std::ostringstream out;
  out << attack_kind_name(kind) << "(eps=" << epsilon;
  if (kind == AttackKind::kIfgsm || kind == AttackKind::kPgd) {
    out << ",alpha=" << alpha << ",n=" << iterations;
  }
  out << ')';
  return out.str();
}

double rescale_budget(double value, double v_max) { return value * v_max / kReferenceFeatureMax; }

AttackConfig AttackConfig::scaled_default(double v_max) {
  AttackConfig c;
  c.kind = AttackKind::kIfgsm;
  c.epsilon = rescale_budget(0.3, v_max);
  c.alpha = rescale_budget(0.0625, v_max);
  c.iterations = 2;
  return c;
}

AttackConfig AttackConfig::scaled_strong_pgd(double v_max) {
  AttackConfig c;
  c.kind = AttackKind::kPgd;
  c.epsilon = rescale_budget(0.5, v_max);
  c.alpha = rescale_budget(0.125, v_max);
  c.iterations = 6;
  return c;
}

double AdversarialVisual::linf_distance() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    worst = std::max(worst, std::abs(perturbed[i] - original[i]));
  }
  return worst;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

VisualGradientFn model_gradient_fn(const VqaModelParams& params, const Question& q,
                                   std::size_t label) {
  return [&params, q, label](const Tensor& v) { return visual_gradient(params, v, q, label).grad; };
}

namespace {

// Range clamp first, then the ball clip, so the eps-ball holds even when v
// itself sits outside [0, v_max].
void project(Tensor& x, const Tensor& v, double epsilon, double v_max) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    double value = std::clamp(x[i], 0.0, v_max);
    x[i] = std::clamp(value, v[i] - epsilon, v[i] + epsilon);
  }
}

void check_gradient(const Tensor& g, const Tensor& v) {
  if (!g.same_shape(v)) {
    throw ShapeError("attack gradient shape " + shape_to_string(g.shape()) +
                     " differs from input " + shape_to_string(v.shape()));
  }
}

}  // namespace

AdversarialVisual fgsm(const VisualGradientFn& grad, const Tensor& v, double epsilon,
                       double v_max) {
  const Tensor g = grad(v);
  check_gradient(g, v);
  Tensor x = v;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += epsilon * sign(g[i]);
  project(x, v, epsilon, v_max);
  return {std::move(x), v};
}

AdversarialVisual projected_sign_ascent(const VisualGradientFn& grad, const Tensor& v,
                                        const Tensor& start, double epsilon, double alpha,
                                        std::size_t n, double v_max) {
  Tensor x = start;
  project(x, v, epsilon, v_max);
  for (std::size_t step = 0; step < n; ++step) {
    const Tensor g = grad(x);
    check_gradient(g, v);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * sign(g[i]);
    project(x, v, epsilon, v_max);
  }
  return {std::move(x), v};
}

AdversarialVisual ifgsm(const VisualGradientFn& grad, const Tensor& v, double epsilon,
                        double alpha, std::size_t n, double v_max) {
  return projected_sign_ascent(grad, v, v, epsilon, alpha, n, v_max);
}

Tensor pgd_start(const Tensor& v, double epsilon, std::uint64_t seed, double v_max) {
  Rng rng(seed);
  std::uniform_real_distribution<double> noise(-epsilon, epsilon);
  Tensor x = v;
  for (auto& e : x.values()) e += epsilon > 0.0 ? noise(rng) : 0.0;
  project(x, v, epsilon, v_max);
  return x;
}

AdversarialVisual pgd(const VisualGradientFn& grad, const Tensor& v, double epsilon,
                      double alpha, std::size_t n, std::uint64_t seed, double v_max) {
  return projected_sign_ascent(grad, v, pgd_start(v, epsilon, seed, v_max), epsilon, alpha, n,
                               v_max);
}

AdversarialVisual random_noise(const Tensor& v, double sigma, std::uint64_t seed, double v_max) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  Tensor x = v;
  if (sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& e : x.values()) e = std::clamp(e + noise(rng), 0.0, v_max);
  }
  return {std::move(x), v};
}

std::size_t resolve_label(const VqaModelParams& params, const Tensor& v, const Question& q,
                          std::size_t true_label, LabelPolicy policy) {
  if (policy == LabelPolicy::kTrueLabel) return true_label;
  return predict(params, v, q);
}

AdversarialVisual run_attack(const VqaModelParams& params, const Tensor& v, const Question& q,
                             std::size_t true_label, const AttackConfig& config, double v_max,
                             std::uint64_t seed) {
  config.validate();
  if (config.kind == AttackKind::kNoise) return random_noise(v, config.epsilon, seed, v_max);
  const std::size_t label = resolve_label(params, v, q, true_label, config.label_policy);
  const auto grad = model_gradient_fn(params, q, label);
  switch (config.kind) {
    case AttackKind::kFgsm:
      return fgsm(grad, v, config.epsilon, v_max);
    case AttackKind::kIfgsm:
      return ifgsm(grad, v, config.epsilon, config.alpha, config.iterations, v_max);
    case AttackKind::kPgd:
      return pgd(grad, v, config.epsilon, config.alpha, config.iterations, seed, v_max);
    case AttackKind::kNoise:
      break;
  }
  throw std::logic_error("unreachable attack kind");
}

}  // namespace vqaug
