#include <doctest.h>

#include "support.hpp"
#include "vqaug/attack.hpp"

using namespace vqaug;
using namespace vqaug::test;

namespace {

constexpr double kVmax = 10.0;

VisualGradientFn constant_gradient(double value) {
  return [value](const Tensor& v) { return Tensor(v.shape(), value); };
}

double linf(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Mixed-sign gradient whose sign flips with the element index.
VisualGradientFn alternating_gradient() {
  return [](const Tensor& v) {
    Tensor g(v.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 2 == 0) ? 0.5 : -2.0;
    return g;
  };
}

}  // namespace

TEST_CASE("fgsm with zero budget is the identity") {
  Rng rng(1);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  CHECK(fgsm(alternating_gradient(), v, 0.0, kVmax).perturbed == v);
}

TEST_CASE("fgsm on a positive linear loss adds epsilon everywhere") {
  Rng rng(2);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  const auto adv = fgsm(constant_gradient(3.0), v, 0.3, kVmax);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(adv.perturbed[i] == v[i] + 0.3);
}

TEST_CASE("zero gradient entries are left unchanged") {
  const Tensor v = Tensor::matrix(1, 3, {1, 2, 3});
  const auto adv = fgsm(constant_gradient(0.0), v, 0.3, kVmax);
  CHECK(adv.perturbed == v);
  CHECK(sign(0.0) == 0.0);
  CHECK(sign(-2.0) == -1.0);
}

TEST_CASE("ifgsm with one full step equals fgsm") {
  Rng rng(3);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  CHECK(ifgsm(alternating_gradient(), v, 0.3, 0.3, 1, kVmax).perturbed ==
        fgsm(alternating_gradient(), v, 0.3, kVmax).perturbed);
}

TEST_CASE("two unclipped steps move each element by 0.125") {
  Rng rng(4);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  const auto adv = ifgsm(alternating_gradient(), v, 0.3, 0.0625, 2, kVmax);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(adv.perturbed[i] - v[i] == doctest::Approx(i % 2 == 0 ? 0.125 : -0.125).epsilon(1e-12));
  }
}

TEST_CASE("large steps are clipped to the ball") {
  Rng rng(5);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  const auto adv = ifgsm(alternating_gradient(), v, 0.3, 1.0, 3, kVmax);
  CHECK(linf(adv.perturbed, v) <= 0.3 + 1e-9);
  CHECK(adv.linf_distance() <= 0.3 + 1e-9);
}

TEST_CASE("outputs stay inside the feature range") {
  const Tensor v = Tensor::matrix(1, 4, {0.0, 0.1, 9.9, 10.0});
  const auto up = ifgsm(constant_gradient(1.0), v, 0.5, 0.25, 3, kVmax);
  const auto down = ifgsm(constant_gradient(-1.0), v, 0.5, 0.25, 3, kVmax);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(up.perturbed[i] <= kVmax);
    CHECK(down.perturbed[i] >= 0.0);
  }
  CHECK(up.perturbed[3] == kVmax);
  CHECK(down.perturbed[0] == 0.0);
}

TEST_CASE("pgd from a zero-noise start equals ifgsm") {
  Rng rng(6);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  const auto g = alternating_gradient();
  CHECK(projected_sign_ascent(g, v, v, 0.3, 0.0625, 2, kVmax).perturbed ==
        ifgsm(g, v, 0.3, 0.0625, 2, kVmax).perturbed);
}

TEST_CASE("pgd stays in the ball for any seed and is reproducible") {
  Rng rng(7);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor start = pgd_start(v, 0.5, seed, kVmax);
    CHECK(linf(start, v) <= 0.5 + 1e-9);
    const auto adv = pgd(alternating_gradient(), v, 0.5, 0.125, 6, seed, kVmax);
    CHECK(linf(adv.perturbed, v) <= 0.5 + 1e-9);
    CHECK(adv.perturbed == pgd(alternating_gradient(), v, 0.5, 0.125, 6, seed, kVmax).perturbed);
  }
}

TEST_CASE("random noise") {
  Rng rng(8);
  const Tensor v = random_tensor({3, 4}, rng, 1, 9);
  CHECK(random_noise(v, 0.0, 3, kVmax).perturbed == v);
  CHECK(random_noise(v, 0.3, 3, kVmax).perturbed == random_noise(v, 0.3, 3, kVmax).perturbed);
  CHECK(!(random_noise(v, 0.3, 3, kVmax).perturbed == v));
}

TEST_CASE("label policies") {
  Rng rng(9);
  const auto dims = small_dims();
  const auto params = VqaModelParams::init(dims, 4, 0.5);
  const Tensor v = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
  const Question q{{1, 2}, ""};
  const std::size_t predicted = predict(params, v, q);
  const std::size_t other = (predicted + 1) % dims.answers;
  CHECK(resolve_label(params, v, q, other, LabelPolicy::kTrueLabel) == other);
  CHECK(resolve_label(params, v, q, other, LabelPolicy::kPredictedLabel) == predicted);
  CHECK(resolve_label(params, v, q, predicted, LabelPolicy::kTrueLabel) ==
        resolve_label(params, v, q, predicted, LabelPolicy::kPredictedLabel));
}

TEST_CASE("run_attack dispatches on kind and respects the ball on the model") {
  Rng rng(10);
  const auto dims = small_dims();
  const auto params = VqaModelParams::init(dims, 5, 0.5);
  for (auto kind : {AttackKind::kFgsm, AttackKind::kIfgsm, AttackKind::kPgd}) {
    AttackConfig c;
    c.kind = kind;
    c.epsilon = 0.4;
    c.alpha = 0.3;
    c.iterations = 4;
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor v = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
      const Question q = random_question(dims, rng);
      const auto adv = run_attack(params, v, q, 1, c, kVmax, trial);
      CHECK(adv.linf_distance() <= 0.4 + 1e-9);
      CHECK(adv.perturbed == run_attack(params, v, q, 1, c, kVmax, trial).perturbed);
      CHECK(loss(params, adv.perturbed, q, 1) >= loss(params, v, q, 1) - 1e-12);
    }
  }
}

TEST_CASE("config validation") {
  AttackConfig c;
  c.epsilon = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AttackConfig{};
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AttackConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(parse_attack_kind("pgd") == AttackKind::kPgd);
  CHECK_THROWS(parse_attack_kind("bogus"));
  const auto d = AttackConfig::scaled_default(kReferenceFeatureMax);
  CHECK(d.epsilon == 0.3);
  CHECK(d.alpha == 0.0625);
  CHECK(d.iterations == 2);
  const auto s = AttackConfig::scaled_default(10.0);
  CHECK(s.epsilon == doctest::Approx(0.3 * 10.0 / 83.0).epsilon(1e-15));
}
