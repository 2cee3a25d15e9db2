#include "vqaug/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "vqaug/parallel.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

const char* training_mode_name(TrainingMode mode) {
  return mode == TrainingMode::kVanilla ? "vanilla" : "adversarial";
}

TrainingMode parse_training_mode(const std::string& name) {
  if (name == "vanilla") return TrainingMode::kVanilla;
  if (name == "adversarial") return TrainingMode::kAdversarial;
  throw std::invalid_argument("unknown training mode '" + name +
                              "' (expected vanilla or adversarial)");
}

// ---------------------------------------------------------------------------
// Schedule

std::vector<std::string> TrainingSchedule::problems() const {
  std::vector<std::string> out;
  if (epochs < 1) out.push_back("training.epochs must be >= 1");
  if (batch_size < 1) out.push_back("training.batch_size must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) out.push_back("training.base_lr must be > 0");
  if (!(decay > 0.0) || decay > 1.0) out.push_back("training.decay must lie in (0, 1]");
  if (decay_every < 1) out.push_back("training.decay_every must be >= 1");
  if (adv_start > adv_end || adv_end > epochs) {
    out.push_back("training period (" + std::to_string(adv_start) + ", " +
                  std::to_string(adv_end) + ") must satisfy 0 <= start <= end <= epochs (" +
                  std::to_string(epochs) + ")");
  }
  if (!(adv_weight >= 0.0) || !std::isfinite(adv_weight)) {
    out.push_back("training.adv_weight must be finite and >= 0");
  }
  if (paraphrases_per_question < 1) out.push_back("training.paraphrases_per_question must be >= 1");
  if (!(init_scale > 0.0)) out.push_back("training.init_scale must be > 0");
  if (workers < 1) out.push_back("training.workers must be >= 1");
  try {
    attack.validate();
  } catch (const std::exception& e) {
    out.push_back(std::string("training.attack: ") + e.what());
  }
  return out;
}

void TrainingSchedule::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::string message = "invalid training schedule:";
  for (const auto& p : list) message += "\n  " + p;
  throw std::invalid_argument(message);
}

double TrainingSchedule::lr_at(std::size_t epoch) const {
  if (epoch <= decay_after) return base_lr;
  const std::size_t steps = (epoch - decay_after - 1) / decay_every + 1;
  return base_lr * std::pow(decay, static_cast<double>(steps));
}

double TrainingSchedule::lr_for(std::size_t epoch, TrainingMode mode) const {
  if (!stage_lr || mode != TrainingMode::kAdversarial || adv_start >= adv_end || adv_weight == 0.0) {
    return lr_at(epoch);
  }
  if (epoch >= adv_end) return lr_at(epoch - adv_end);
  if (epoch >= adv_start) return lr_at(epoch - adv_start);
  return lr_at(epoch);
}

// ---------------------------------------------------------------------------
// Adamax

AdamaxState AdamaxState::zeros_like(std::span<const Tensor> params) {
  AdamaxState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.u.emplace_back(p.shape(), 0.0);
  }
  return s;
}

void adamax_step(AdamaxState& state, std::span<Tensor> params, std::span<const Tensor> grads,
                 double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw ShapeError("adamax: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i])) {
      throw ShapeError(std::string("adamax: gradient of ") + param_name(i) + " has shape " +
                       shape_to_string(grads[i].shape()) + ", parameter has " +
                       shape_to_string(params[i].shape()));
    }
    if (!grads[i].all_finite()) {
      throw NumericalError(std::string("adamax: non-finite gradient for ") + param_name(i) +
                           " at step " + std::to_string(state.t + 1) + "; step rejected");
    }
  }
  state.t += 1;
  const double step = lr / (1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto m = state.m[i].values();
    auto u = state.u[i].values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      u[j] = std::max(state.beta2 * u[j], std::abs(g[j]));
      p[j] -= step * m[j] / (u[j] + state.floor);
    }
  }
}

// ---------------------------------------------------------------------------
// Augmented pairs and the combined loss

AugmentedVisuals augmented_pairs(const VqaModelParams& params, const Tensor& v, const Question& q,
                                 std::span<const Question> q_adv, std::size_t true_label,
                                 const AttackConfig& attack, double v_max, std::uint64_t seed) {
  AugmentedVisuals out;
  out.v_qc = run_attack(params, v, q, true_label, attack, v_max, derive_seed(seed, "v_qc")).perturbed;
  for (std::size_t j = 0; j < q_adv.size(); ++j) {
    out.v_qadv.push_back(
        run_attack(params, v, q_adv[j], true_label, attack, v_max, derive_seed(seed, "v_qadv", j))
            .perturbed);
  }
  return out;
}

double LossTerms::adversarial_sum() const {
  return adversarial[0] + adversarial[1] + adversarial[2] + adversarial[3];
}

namespace {

void check_example(const AugmentedExample& ex) {
  if (!ex.visual || !ex.question) throw std::invalid_argument("augmented example has no inputs");
  if (ex.adversarial.v_qadv.size() != ex.paraphrases.size()) {
    throw std::invalid_argument("augmented example has " + std::to_string(ex.paraphrases.size()) +
                                " paraphrases but " +
                                std::to_string(ex.adversarial.v_qadv.size()) +
                                " paraphrase-attacked visuals");
  }
}

// Per-example term values before batch averaging.
std::array<double, 5> example_terms(const VqaModelParams& params, const AugmentedExample& ex) {
  check_example(ex);
  const auto& adv = ex.adversarial;
  std::array<double, 5> t{};
  t[0] = loss(params, *ex.visual, *ex.question, ex.answer);
  t[1] = loss(params, adv.v_qc, *ex.question, ex.answer);
  const std::size_t k = ex.paraphrases.size();
  if (k == 0) return t;
  for (std::size_t j = 0; j < k; ++j) {
    t[2] += loss(params, adv.v_qadv[j], *ex.question, ex.answer);
    t[3] += loss(params, adv.v_qc, ex.paraphrases[j], ex.answer);
    t[4] += loss(params, adv.v_qadv[j], ex.paraphrases[j], ex.answer);
  }
  for (std::size_t i = 2; i < 5; ++i) t[i] /= static_cast<double>(k);
  return t;
}

struct ExampleGradient {
  std::array<double, 5> terms{};
  std::vector<Tensor> grads;
};

std::vector<Tensor> zero_grads(const VqaModelParams& params) {
  std::vector<Tensor> out;
  for (const auto& p : params.tensors()) out.emplace_back(p.shape(), 0.0);
  return out;
}

void accumulate(std::vector<Tensor>& into, const std::vector<Tensor>& add) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    auto dst = into[i].values();
    const auto src = add[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void scale_all(std::vector<Tensor>& grads, double factor) {
  for (auto& g : grads) {
    for (auto& x : g.values()) x *= factor;
  }
}

ExampleGradient example_gradient(const VqaModelParams& params, const AugmentedExample* ex,
                                 const VqaTriplet* clean, double w) {
  Tape tape;
  const auto bound = bind_params(tape, params, true);
  const auto& dims = params.dims();
  auto term = [&](const Tensor& visual, const Question& q, std::size_t answer) {
    const NodeId v = tape.constant(visual);
    return loss_graph(tape, forward_graph(tape, bound, dims, v, q).probs, answer);
  };

  ExampleGradient out;
  NodeId root;
  if (clean) {
    root = term(clean->visual, clean->question, clean->answer);
    out.terms[0] = tape.value(root).item();
  } else {
    check_example(*ex);
    const auto& adv = ex->adversarial;
    std::array<NodeId, 5> nodes{};
    nodes[0] = term(*ex->visual, *ex->question, ex->answer);
    nodes[1] = term(adv.v_qc, *ex->question, ex->answer);
    NodeId adv_sum = nodes[1];
    const std::size_t k = ex->paraphrases.size();
    if (k > 0) {
      const double inv_k = 1.0 / static_cast<double>(k);
      std::array<NodeId, 3> sums{};
      for (std::size_t j = 0; j < k; ++j) {
        const std::array<NodeId, 3> pj = {
            term(adv.v_qadv[j], *ex->question, ex->answer),
            term(adv.v_qc, ex->paraphrases[j], ex->answer),
            term(adv.v_qadv[j], ex->paraphrases[j], ex->answer),
        };
        for (std::size_t i = 0; i < 3; ++i) sums[i] = j == 0 ? pj[i] : tape.add(sums[i], pj[i]);
      }
      for (std::size_t i = 0; i < 3; ++i) {
        nodes[i + 2] = k == 1 ? sums[i] : tape.scale(sums[i], inv_k);
        adv_sum = tape.add(adv_sum, nodes[i + 2]);
      }
    }
    for (std::size_t i = 0; i < 5; ++i) {
      if (i < 2 || k > 0) out.terms[i] = tape.value(nodes[i]).item();
    }
    root = tape.add(nodes[0], tape.scale(adv_sum, w));
  }
  if (!std::isfinite(tape.value(root).item())) {
    throw NumericalError("non-finite loss for example " +
                         std::to_string(clean ? clean->id : 0));
  }
  const auto grads = tape.backward(root);
  for (auto id : bound.ids) out.grads.push_back(grads.at(id));
  return out;
}

BatchGradient reduce(const VqaModelParams& params, std::vector<ExampleGradient>& per_example) {
  BatchGradient out;
  out.grads = zero_grads(params);
  std::array<double, 5> sums{};
  for (const auto& ex : per_example) {
    accumulate(out.grads, ex.grads);
    for (std::size_t i = 0; i < 5; ++i) sums[i] += ex.terms[i];
  }
  const double inv = 1.0 / static_cast<double>(per_example.size());
  scale_all(out.grads, inv);
  out.terms.clean = sums[0] * inv;
  for (std::size_t i = 0; i < 4; ++i) out.terms.adversarial[i] = sums[i + 1] * inv;
  return out;
}

}  // namespace

LossTerms loss_terms(const VqaModelParams& params, std::span<const AugmentedExample> batch) {
  if (batch.empty()) throw std::invalid_argument("loss of an empty batch");
  std::array<double, 5> sums{};
  for (const auto& ex : batch) {
    const auto t = example_terms(params, ex);
    for (std::size_t i = 0; i < 5; ++i) sums[i] += t[i];
  }
  const double n = static_cast<double>(batch.size());
  LossTerms out;
  out.clean = sums[0] / n;
  for (std::size_t i = 0; i < 4; ++i) out.adversarial[i] = sums[i + 1] / n;
  return out;
}

double combined_loss(const VqaModelParams& params, std::span<const AugmentedExample> batch,
                     double w) {
  return loss_terms(params, batch).total(w);
}

BatchGradient clean_gradient(const VqaModelParams& params, std::span<const VqaTriplet* const> batch,
                             std::size_t workers) {
  if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");
  std::vector<ExampleGradient> per(batch.size());
  parallel_for(batch.size(), workers,
               [&](std::size_t i) { per[i] = example_gradient(params, nullptr, batch[i], 0.0); });
  return reduce(params, per);
}

BatchGradient combined_gradient(const VqaModelParams& params,
                                std::span<const AugmentedExample> batch, double w,
                                std::size_t workers) {
  if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");
  std::vector<ExampleGradient> per(batch.size());
  parallel_for(batch.size(), workers,
               [&](std::size_t i) { per[i] = example_gradient(params, &batch[i], nullptr, w); });
  return reduce(params, per);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

double validation_accuracy(const VqaModelParams& params, const std::vector<VqaTriplet>& val,
                           std::size_t workers) {
  if (val.empty()) return 0.0;
  std::vector<char> correct(val.size(), 0);
  parallel_for(val.size(), workers, [&](std::size_t i) {
    correct[i] = predict(params, val[i].visual, val[i].question) == val[i].answer;
  });
  const auto hits = std::count(correct.begin(), correct.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const TrainingSchedule& schedule, TrainingMode mode, const ModelDims& dims,
                  const std::vector<VqaTriplet>& train_set, const std::vector<VqaTriplet>& val_set,
                  double v_max, const EpochCallback& on_epoch) {
  schedule.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");

  TrainResult result;
  result.params = VqaModelParams::init(dims, derive_seed(schedule.seed, "init"), schedule.init_scale);
  auto& params = result.params;
  AdamaxState state = AdamaxState::zeros_like(params.tensors());

  std::vector<std::size_t> order(train_set.size());
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = schedule.lr_for(epoch, mode);
    log.adversarial = mode == TrainingMode::kAdversarial && schedule.in_adversarial_period(epoch);
    const bool use_attacks = log.adversarial && schedule.adv_weight != 0.0;

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(schedule.seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::array<double, 5> epoch_sums{};
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += schedule.batch_size, ++global_step) {
      const std::size_t end = std::min(order.size(), begin + schedule.batch_size);
      BatchGradient bg;
      if (use_attacks) {
        std::vector<AugmentedExample> batch(end - begin);
        const std::uint64_t step_seed = derive_seed(schedule.seed, "attack-step", global_step);
        parallel_for(batch.size(), schedule.workers, [&](std::size_t i) {
          const auto& ex = train_set[order[begin + i]];
          auto& aug = batch[i];
          aug.visual = &ex.visual;
          aug.question = &ex.question;
          aug.answer = ex.answer;
          const std::size_t k = std::min(schedule.paraphrases_per_question, ex.paraphrases.size());
          aug.paraphrases.assign(ex.paraphrases.begin(), ex.paraphrases.begin() + k);
          AttackConfig attack = schedule.attack;
          attack.label_policy = LabelPolicy::kPredictedLabel;
          aug.adversarial = augmented_pairs(params, ex.visual, ex.question, aug.paraphrases,
                                            ex.answer, attack, v_max,
                                            derive_seed(step_seed, "example", ex.id));
        });
        for (const auto& aug : batch) log.fallbacks += aug.paraphrases.empty() ? 1 : 0;
        bg = combined_gradient(params, batch, schedule.adv_weight, schedule.workers);
      } else {
        std::vector<const VqaTriplet*> batch;
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
        bg = clean_gradient(params, batch, schedule.workers);
      }
      const double total = bg.terms.total(use_attacks ? schedule.adv_weight : 0.0);
      if (!std::isfinite(total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(global_step));
      }
      try {
        adamax_step(state, params.tensors(), bg.grads, log.lr);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(global_step) + ")");
      }
      epoch_sums[0] += bg.terms.clean;
      for (std::size_t i = 0; i < 4; ++i) epoch_sums[i + 1] += bg.terms.adversarial[i];
      ++batches;
    }
    log.clean_loss = epoch_sums[0] / static_cast<double>(batches);
    for (std::size_t i = 0; i < 4; ++i) {
      log.adversarial_loss[i] = epoch_sums[i + 1] / static_cast<double>(batches);
    }
    log.val_accuracy = validation_accuracy(params, val_set, schedule.workers);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

void write_epoch_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,phase,lr,clean_loss,adv_vqc_q,adv_vqadv_q,adv_vqc_qadv,adv_vqadv_qadv,"
         "val_accuracy,fallbacks\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  for (const auto& e : log) {
    out << e.epoch << ',' << (e.adversarial ? "adversarial" : "clean") << ',' << num(e.lr) << ','
        << num(e.clean_loss);
    for (double a : e.adversarial_loss) out << ',' << num(a);
    out << ',' << num(e.val_accuracy) << ',' << e.fallbacks << '\n';
  }
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  write_epoch_log_csv(out, log);
  return out.str();
}

}  // namespace vqaug
