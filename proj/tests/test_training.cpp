#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vqaug/dataset.hpp"
#include "vqaug/training.hpp"

using namespace vqaug;
using namespace vqaug::test;

namespace {

/// Scalar Adamax, written independently of the tensor version.
struct ScalarAdamax {
  double m = 0.0, u = 0.0;
  int t = 0;
  double step(double p, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    u = std::max(0.999 * u, std::abs(g));
    return p - lr / (1.0 - std::pow(0.9, t)) * m / (u + 1e-8);
  }
};

std::vector<VqaTriplet> random_triplets(const ModelDims& dims, std::size_t n, Rng& rng) {
  std::vector<VqaTriplet> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = i;
    out[i].visual = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
    out[i].question = random_question(dims, rng);
    out[i].answer = i % dims.answers;
  }
  return out;
}

TrainingSchedule tiny_schedule() {
  TrainingSchedule s;
  s.epochs = 6;
  s.batch_size = 4;
  s.adv_start = 2;
  s.adv_end = 4;
  s.attack.epsilon = 0.2;
  s.attack.alpha = 0.1;
  s.attack.iterations = 2;
  s.seed = 5;
  return s;
}

struct Tiny {
  ModelDims dims = small_dims();
  std::vector<VqaTriplet> train, val;
  Tiny() {
    Rng rng(3);
    train = random_triplets(dims, 12, rng);
    val = random_triplets(dims, 6, rng);
    for (std::size_t i = 0; i < train.size(); i += 2) train[i].paraphrases.push_back(random_question(dims, rng));
  }
};

}  // namespace

TEST_CASE("adamax with zero gradient leaves parameters unchanged") {
  std::vector<Tensor> params{Tensor::row({1.0, -2.0}), Tensor({2, 2}, 0.5)};
  const auto before = params;
  auto state = AdamaxState::zeros_like(params);
  const std::vector<Tensor> grads{Tensor({1, 2}, 0.0), Tensor({2, 2}, 0.0)};
  adamax_step(state, params, grads, 0.001);
  CHECK(params[0] == before[0]);
  CHECK(params[1] == before[1]);
}

TEST_CASE("one adamax step with unit gradient moves by the learning rate") {
  std::vector<Tensor> params{Tensor::row({0.5})};
  auto state = AdamaxState::zeros_like(params);
  adamax_step(state, params, std::vector<Tensor>{Tensor::row({1.0})}, 0.001);
  CHECK(std::abs(params[0][0] - (0.5 - 0.001)) < 1e-10);
  CHECK(state.m[0][0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(state.u[0][0] == 1.0);
}

TEST_CASE("adamax matches a scalar reimplementation over ten steps") {
  Rng rng(4);
  std::vector<Tensor> params{random_tensor({3, 2}, rng)};
  std::vector<ScalarAdamax> oracle(6);
  std::vector<double> expect(params[0].values().begin(), params[0].values().end());
  auto state = AdamaxState::zeros_like(params);
  for (int step = 0; step < 10; ++step) {
    const Tensor g = random_tensor({3, 2}, rng, -2, 2);
    const double lr = 0.001 * (step + 1);
    adamax_step(state, params, std::vector<Tensor>{g}, lr);
    for (std::size_t j = 0; j < 6; ++j) expect[j] = oracle[j].step(expect[j], g[j], lr);
  }
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(params[0][j] - expect[j]) < 1e-12);
}

TEST_CASE("adamax rejects non-finite gradients without changing state") {
  std::vector<Tensor> params{Tensor::row({1.0, 2.0})};
  auto state = AdamaxState::zeros_like(params);
  CHECK_THROWS_AS(adamax_step(state, params, std::vector<Tensor>{Tensor::row({NAN, 0.0})}, 0.1),
                  NumericalError);
  CHECK(state.t == 0);
  CHECK(params[0] == Tensor::row({1.0, 2.0}));
  CHECK_THROWS_AS(adamax_step(state, params, std::vector<Tensor>{Tensor::row({1.0})}, 0.1), ShapeError);
}

TEST_CASE("learning rate schedule") {
  const TrainingSchedule s;
  for (std::size_t e = 0; e <= 5; ++e) CHECK(s.lr_at(e) == 0.001);
  CHECK(s.lr_at(6) == doctest::Approx(0.00025).epsilon(1e-15));
  CHECK(s.lr_at(7) == doctest::Approx(0.00025).epsilon(1e-15));
  CHECK(s.lr_at(8) == doctest::Approx(0.0000625).epsilon(1e-15));
  CHECK(s.lr_at(9) == s.lr_at(8));
  for (std::size_t e = 0; e < 25; ++e) CHECK(s.lr_for(e, TrainingMode::kVanilla) == s.lr_at(e));
}

TEST_CASE("stage-wise learning rate restarts at the window edges") {
  TrainingSchedule s;
  CHECK(s.lr_for(9, TrainingMode::kAdversarial) == s.lr_at(9));
  CHECK(s.lr_for(10, TrainingMode::kAdversarial) == 0.001);
  CHECK(s.lr_for(14, TrainingMode::kAdversarial) == 0.001);
  CHECK(s.lr_for(15, TrainingMode::kAdversarial) == 0.001);
  CHECK(s.lr_for(21, TrainingMode::kAdversarial) == s.lr_at(6));
  s.stage_lr = false;
  for (std::size_t e = 0; e < 25; ++e) CHECK(s.lr_for(e, TrainingMode::kAdversarial) == s.lr_at(e));
  s.stage_lr = true;
  s.adv_start = s.adv_end = 0;
  for (std::size_t e = 0; e < 25; ++e) CHECK(s.lr_for(e, TrainingMode::kAdversarial) == s.lr_at(e));
  s.adv_end = 15;
  s.adv_start = 10;
  s.adv_weight = 0.0;
  for (std::size_t e = 0; e < 25; ++e) CHECK(s.lr_for(e, TrainingMode::kAdversarial) == s.lr_at(e));
}

TEST_CASE("default period covers exactly epochs ten to fourteen") {
  const TrainingSchedule s;
  for (std::size_t e = 0; e < s.epochs; ++e) CHECK(s.in_adversarial_period(e) == (e >= 10 && e < 15));
}

TEST_CASE("schedule validation collects every problem") {
  TrainingSchedule s;
  s.adv_start = 20;
  s.adv_end = 30;
  s.adv_weight = -1;
  s.batch_size = 0;
  const auto problems = s.problems();
  CHECK(problems.size() == 3);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("augmented pairs with zero budget are the clean features") {
  Rng rng(6);
  const auto dims = small_dims();
  const auto params = VqaModelParams::init(dims, 2, 0.5);
  const Tensor v = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
  const Question q = random_question(dims, rng);
  const std::vector<Question> qa{random_question(dims, rng)};
  AttackConfig c;
  c.epsilon = 0.0;
  c.label_policy = LabelPolicy::kPredictedLabel;
  const auto out = augmented_pairs(params, v, q, qa, 1, c, 10.0, 9);
  CHECK(out.v_qc == v);
  REQUIRE(out.v_qadv.size() == 1);
  CHECK(out.v_qadv[0] == v);
}

TEST_CASE("augmented pairs with the paraphrase equal to the question coincide") {
  Rng rng(7);
  const auto dims = small_dims();
  const auto params = VqaModelParams::init(dims, 3, 0.5);
  for (auto kind : {AttackKind::kFgsm, AttackKind::kIfgsm}) {
    const Tensor v = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
    const Question q = random_question(dims, rng);
    AttackConfig c;
    c.kind = kind;
    c.epsilon = 0.3;
    c.alpha = 0.1;
    c.iterations = 3;
    c.label_policy = LabelPolicy::kPredictedLabel;
    const std::vector<Question> same{q};
    const auto out = augmented_pairs(params, v, q, same, 0, c, 10.0, 11);
    CHECK(out.v_qadv[0] == out.v_qc);
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(out.v_qc[i] - v[i]));
    CHECK(worst <= 0.3 + 1e-12);
  }
}

TEST_CASE("combined loss is the clean loss plus w times four term losses") {
  Rng rng(8);
  const auto dims = small_dims();
  const auto params = VqaModelParams::init(dims, 4, 0.5);
  const auto data = random_triplets(dims, 5, rng);
  std::vector<AugmentedExample> batch(data.size());
  double clean = 0.0, adv = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& ex = batch[i];
    ex.visual = &data[i].visual;
    ex.question = &data[i].question;
    ex.answer = data[i].answer;
    ex.paraphrases = {random_question(dims, rng)};
    ex.adversarial.v_qc = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
    ex.adversarial.v_qadv = {random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3)};
    const auto& a = ex.adversarial;
    clean += loss(params, data[i].visual, data[i].question, ex.answer);
    adv += loss(params, a.v_qc, data[i].question, ex.answer) +
           loss(params, a.v_qadv[0], data[i].question, ex.answer) +
           loss(params, a.v_qc, ex.paraphrases[0], ex.answer) +
           loss(params, a.v_qadv[0], ex.paraphrases[0], ex.answer);
  }
  clean /= 5.0;
  adv /= 5.0;
  CHECK(combined_loss(params, batch, 0.0) == loss_terms(params, batch).clean);
  CHECK(std::abs(combined_loss(params, batch, 0.0) - clean) < 1e-12);
  const double total = combined_loss(params, batch, 50.0);
  CHECK(std::abs(total - (clean + 50.0 * adv)) < 1e-12 * std::max(1.0, total));

  const auto bg = combined_gradient(params, batch, 50.0);
  CHECK(std::abs(bg.terms.total(50.0) - total) < 1e-12 * std::max(1.0, total));
}

TEST_CASE("five equal terms give (1 + 4w) L0") {
  LossTerms t;
  t.clean = 0.7;
  t.adversarial = {0.7, 0.7, 0.7, 0.7};
  CHECK(t.total(50.0) == doctest::Approx(201.0 * 0.7).epsilon(1e-15));
  CHECK(t.total(0.0) == 0.7);
}

TEST_CASE("combined gradient matches central differences") {
  Rng rng(9);
  const auto dims = small_dims();
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 2; ++seed) {
    const auto params = VqaModelParams::init(dims, 50 + seed, 0.5);
    const auto data = random_triplets(dims, 2, rng);
    std::vector<AugmentedExample> batch(2);
    double margin = INFINITY;
    for (std::size_t i = 0; i < 2; ++i) {
      auto& ex = batch[i];
      ex.visual = &data[i].visual;
      ex.question = &data[i].question;
      ex.answer = data[i].answer;
      ex.paraphrases = {random_question(dims, rng), random_question(dims, rng)};
      ex.adversarial.v_qc = random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3);
      for (int j = 0; j < 2; ++j) {
        ex.adversarial.v_qadv.push_back(random_tensor({dims.regions, dims.feature_dim}, rng, 0, 3));
      }
      margin = std::min({margin, model_relu_margin(params, data[i].visual, data[i].question),
                         model_relu_margin(params, ex.adversarial.v_qc, ex.paraphrases[0])});
      for (int j = 0; j < 2; ++j) {
        margin = std::min({margin, model_relu_margin(params, ex.adversarial.v_qadv[j], ex.paraphrases[j]),
                           model_relu_margin(params, ex.adversarial.v_qadv[j], data[i].question),
                           model_relu_margin(params, ex.adversarial.v_qc, ex.paraphrases[j])});
      }
    }
    if (margin < 1e-3) continue;
    ++checked;
    const auto bg = combined_gradient(params, batch, 3.0);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < kNumParams; ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        auto p = params;
        p[i][j] += h;
        const double up = combined_loss(p, batch, 3.0);
        p[i][j] -= 2 * h;
        const double down = combined_loss(p, batch, 3.0);
        // The summed loss is large, so rounding in the differences sets the floor.
        worst = std::max(worst, relative_error((up - down) / (2 * h), bg.grads[i][j], 1e-4));
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("training marks exactly the window epochs adversarial") {
  Tiny t;
  const auto s = tiny_schedule();
  const auto r = train(s, TrainingMode::kAdversarial, t.dims, t.train, t.val, 10.0);
  REQUIRE(r.log.size() == s.epochs);
  for (const auto& e : r.log) {
    CHECK(e.adversarial == (e.epoch >= 2 && e.epoch < 4));
    CHECK(e.lr == s.lr_for(e.epoch, TrainingMode::kAdversarial));
    if (e.adversarial) {
      CHECK(e.fallbacks == 6);
      CHECK(e.adversarial_loss[0] > 0.0);
    } else {
      CHECK(e.adversarial_loss[0] == 0.0);
    }
  }
  for (const auto& p : r.params.tensors()) CHECK(p.all_finite());
}

TEST_CASE("empty window or zero weight is bit-identical to vanilla") {
  Tiny t;
  auto s = tiny_schedule();
  const auto vanilla = train(s, TrainingMode::kVanilla, t.dims, t.train, t.val, 10.0);
  s.adv_start = s.adv_end = 0;
  const auto empty = train(s, TrainingMode::kAdversarial, t.dims, t.train, t.val, 10.0);
  CHECK(empty.params == vanilla.params);
  s = tiny_schedule();
  s.adv_weight = 0.0;
  const auto zero = train(s, TrainingMode::kAdversarial, t.dims, t.train, t.val, 10.0);
  CHECK(zero.params == vanilla.params);
  CHECK(epoch_log_csv(empty.log) == epoch_log_csv(vanilla.log));
}

TEST_CASE("training is reproducible and independent of the worker count") {
  Tiny t;
  auto s = tiny_schedule();
  const auto a = train(s, TrainingMode::kAdversarial, t.dims, t.train, t.val, 10.0);
  const auto b = train(s, TrainingMode::kAdversarial, t.dims, t.train, t.val, 10.0);
  s.workers = 3;
  const auto c = train(s, TrainingMode::kAdversarial, t.dims, t.train, t.val, 10.0);
  CHECK(a.params == b.params);
  CHECK(a.params == c.params);
  CHECK(epoch_log_csv(a.log) == epoch_log_csv(c.log));
}

TEST_CASE("non-finite inputs abort with epoch diagnostics") {
  Tiny t;
  t.train[3].visual[0] = NAN;
  try {
    train(tiny_schedule(), TrainingMode::kVanilla, t.dims, t.train, t.val, 10.0);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("epoch log csv layout") {
  EpochLog e;
  e.epoch = 3;
  e.adversarial = true;
  e.lr = 0.001;
  e.clean_loss = 1.5;
  const auto csv = epoch_log_csv({e});
  CHECK(csv.rfind("epoch,phase,lr,clean_loss,", 0) == 0);
  CHECK(csv.find("\n3,adversarial,0.001,1.5,0,0,0,0,0,0\n") != std::string::npos);
}
