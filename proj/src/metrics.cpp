#include "vqaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "vqaug/parallel.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

double fraction(std::size_t hits, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> answers) {
  check_lengths(predictions.size(), answers.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == answers[i];
  return fraction(hits, predictions.size());
}

double flip_rate(std::span<const std::size_t> on_question,
                 std::span<const std::size_t> on_paraphrase) {
  check_lengths(on_question.size(), on_paraphrase.size(), "flip_rate");
  std::size_t flips = 0;
  for (std::size_t i = 0; i < on_question.size(); ++i) flips += on_question[i] != on_paraphrase[i];
  return fraction(flips, on_question.size());
}

std::vector<std::size_t> predict_all(const VqaModelParams& params,
                                     const std::vector<VqaTriplet>& examples,
                                     std::size_t workers) {
  std::vector<std::size_t> out(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    out[i] = predict(params, examples[i].visual, examples[i].question);
  });
  return out;
}

const Question& paraphrase_or_original(const VqaTriplet& example) {
  return example.paraphrases.empty() ? example.question : example.paraphrases.front();
}

std::vector<std::size_t> attacked_predictions(const VqaModelParams& params,
                                              const std::vector<VqaTriplet>& examples,
                                              const AttackConfig& attack, double v_max,
                                              std::uint64_t seed, bool against_paraphrase,
                                              std::size_t workers) {
  attack.validate();
  std::vector<std::size_t> out(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    const auto& ex = examples[i];
    const Question& q = against_paraphrase ? paraphrase_or_original(ex) : ex.question;
    const auto adv =
        run_attack(params, ex.visual, q, ex.answer, attack, v_max, derive_seed(seed, "eval", ex.id));
    out[i] = predict(params, adv.perturbed, q);
  });
  return out;
}

EvalReport robustness_report(const VqaModelParams& params, const std::vector<VqaTriplet>& examples,
                             const std::vector<AttackConfig>& attackers, double v_max,
                             std::uint64_t seed, std::size_t workers) {
  EvalReport report;
  report.examples = examples.size();
  std::vector<std::size_t> answers;
  for (const auto& ex : examples) answers.push_back(ex.answer);

  const auto clean = predict_all(params, examples, workers);
  report.clean_accuracy = accuracy(clean, answers);

  std::vector<std::size_t> para(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    para[i] = examples[i].paraphrases.empty()
                  ? clean[i]
                  : predict(params, examples[i].visual, examples[i].paraphrases.front());
  });
  report.paraphrase_accuracy = accuracy(para, answers);

  std::vector<std::size_t> on_q, on_p;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].paraphrases.empty()) continue;
    on_q.push_back(clean[i]);
    on_p.push_back(para[i]);
  }
  report.paraphrased = on_q.size();
  report.flip_rate = flip_rate(on_q, on_p);

  for (std::size_t a = 0; a < attackers.size(); ++a) {
    AttackerResult r;
    r.config = attackers[a];
    const std::uint64_t cell_seed = derive_seed(seed, "attacker", a);
    r.accuracy = accuracy(
        attacked_predictions(params, examples, r.config, v_max, cell_seed, false, workers), answers);
    r.combined_accuracy = accuracy(
        attacked_predictions(params, examples, r.config, v_max, cell_seed, true, workers), answers);
    report.attackers.push_back(r);
  }
  return report;
}

void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "model,attacker,kind,epsilon,alpha,iterations,label_policy,examples,paraphrased,"
         "clean_accuracy,attacked_accuracy,paraphrase_accuracy,combined_accuracy,flip_rate\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    auto row = [&](const std::string& attacker, const std::string& kind, double eps, double alpha,
                   std::size_t n, const std::string& policy, double attacked, double combined) {
      out << r.model << ',' << attacker << ',' << kind << ',' << num(eps) << ',' << num(alpha)
          << ',' << n << ',' << policy << ',' << r.examples << ',' << r.paraphrased << ','
          << num(r.clean_accuracy) << ',' << num(attacked) << ',' << num(r.paraphrase_accuracy)
          << ',' << num(combined) << ',' << num(r.flip_rate) << '\n';
    };
    row("none", "none", 0.0, 0.0, 0, "none", r.clean_accuracy, r.paraphrase_accuracy);
    for (const auto& a : r.attackers) {
      row(a.config.label(), attack_kind_name(a.config.kind), a.config.epsilon, a.config.alpha,
          a.config.iterations, label_policy_name(a.config.label_policy), a.accuracy,
          a.combined_accuracy);
    }
  }
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  write_report_csv(out, reports);
  return out.str();
}

std::vector<AblationRow> training_size_ablation(const std::vector<double>& fractions,
                                                const TrainingSchedule& schedule,
                                                const Dataset& data, const ModelDims& dims) {
  if (fractions.empty()) throw std::invalid_argument("ablation needs at least one fraction");
  std::vector<AblationRow> rows;
  for (double f : fractions) {
    const auto subset = training_subset(data.train, f);
    AblationRow row;
    row.fraction = f;
    row.train_examples = subset.size();
    std::vector<std::size_t> answers;
    for (const auto& ex : data.val) answers.push_back(ex.answer);
    for (auto mode : {TrainingMode::kVanilla, TrainingMode::kAdversarial}) {
      const auto result = train(schedule, mode, dims, subset, {}, data.spec.v_max);
      const double acc = accuracy(predict_all(result.params, data.val, schedule.workers), answers);
      (mode == TrainingMode::kVanilla ? row.vanilla_accuracy : row.adversarial_accuracy) = acc;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<SweepCell> sweep_grid(std::span<const AttackKind> kinds,
                                  std::span<const double> epsilons, std::span<const double> alphas,
                                  std::size_t iterations) {
  if (kinds.empty() || epsilons.empty()) throw std::invalid_argument("sweep grid is empty");
  std::vector<SweepCell> cells;
  for (auto kind : kinds) {
    const bool iterative = kind == AttackKind::kIfgsm || kind == AttackKind::kPgd;
    if (iterative && alphas.empty()) {
      throw std::invalid_argument(std::string("sweep grid has no alpha values for ") +
                                  attack_kind_name(kind));
    }
    for (double eps : epsilons) {
      if (!iterative) {
        cells.push_back({kind, eps, 0.0, 1});
        continue;
      }
      for (double alpha : alphas) cells.push_back({kind, eps, alpha, iterations});
    }
  }
  return cells;
}

AttackConfig to_attack(const SweepCell& cell, LabelPolicy policy) {
  AttackConfig c;
  c.kind = cell.kind;
  c.epsilon = cell.epsilon;
  c.alpha = cell.alpha;
  c.iterations = cell.iterations;
  c.label_policy = policy;
  if (c.kind == AttackKind::kFgsm || c.kind == AttackKind::kNoise) c.alpha = 0.0;
  return c;
}

std::vector<double> attacker_sweep(const VqaModelParams& params,
                                   const std::vector<VqaTriplet>& examples,
                                   std::span<const SweepCell> cells, LabelPolicy policy,
                                   double v_max, std::uint64_t seed, std::size_t workers) {
  if (cells.empty()) throw std::invalid_argument("sweep grid is empty");
  std::vector<std::size_t> answers;
  for (const auto& ex : examples) answers.push_back(ex.answer);
  std::vector<double> out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto attack = to_attack(cells[c], policy);
    out.push_back(accuracy(
        attacked_predictions(params, examples, attack, v_max, derive_seed(seed, "attacker", c), false,
                             workers),
        answers));
  }
  return out;
}

}  // namespace vqaug
