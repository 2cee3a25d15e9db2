#include "vqaug/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "vqaug/binary_io.hpp"
#include "vqaug/pipeline.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

namespace fs = std::filesystem;

fs::path RunPaths::lexicon(std::size_t i) const {
  return root / "lexicons" / (i == 0 ? "pivot-a.tsv" : "pivot-b.tsv");
}

fs::path RunPaths::checkpoint(TrainingMode mode) const {
  return root / training_mode_name(mode) / "checkpoint.bin";
}

fs::path RunPaths::epoch_log(TrainingMode mode) const {
  return root / training_mode_name(mode) / "epoch_log.csv";
}

namespace {

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::vector<std::size_t> answers_of(const std::vector<VqaTriplet>& examples) {
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.answer);
  return out;
}

ParaphraseCache require_cache(const RunPaths& paths) {
  if (!fs::exists(paths.paraphrase_cache())) {
    throw std::runtime_error("paraphrase cache " + paths.paraphrase_cache().string() +
                             " not found; run the 'paraphrase' command first");
  }
  return load_paraphrase_cache(paths.paraphrase_cache());
}

ModelDims dims_for(const RunConfig& config, const Dataset& data) {
  return data.model_dims(config.d_emb, config.d_hidden);
}

}  // namespace

GenerateResult cmd_generate(const RunConfig& config) {
  config.validate();
  const RunPaths paths{config.out};
  Dataset data = generate_dataset(config.resolved_world());
  if (config.fraction < 1.0) data.train = training_subset(data.train, config.fraction);

  ensure_parent(paths.train_split());
  save_split(paths.train_split(), "train", data, data.train);
  save_split(paths.val_split(), "val", data, data.val);

  GenerateResult result;
  result.train_examples = data.train.size();
  result.val_examples = data.val.size();
  result.train_sha256 = sha256_file(paths.train_split());
  result.val_sha256 = sha256_file(paths.val_split());
  result.manifest = paths.manifest();

  nlohmann::json world = data.spec;
  const nlohmann::json manifest = {
      {"seed", config.seed},
      {"fraction", config.fraction},
      {"world", world},
      {"files",
       {{"train.bin", {{"examples", result.train_examples}, {"sha256", result.train_sha256}}},
        {"val.bin", {{"examples", result.val_examples}, {"sha256", result.val_sha256}}}}},
  };
  write_file_atomic(paths.manifest(), manifest.dump(2) + "\n");
  return result;
}

Dataset load_dataset(const RunPaths& paths) {
  for (const auto& p : {paths.train_split(), paths.val_split()}) {
    if (!fs::exists(p)) {
      throw std::runtime_error("dataset file " + p.string() +
                               " not found; run the 'generate' command first");
    }
  }
  auto train = load_split(paths.train_split());
  auto val = load_split(paths.val_split());
  if (!(train.question_vocab == val.question_vocab) || !(train.answer_vocab == val.answer_vocab) ||
      train.spec.regions != val.spec.regions || train.spec.feature_dim != val.spec.feature_dim) {
    throw std::runtime_error("train and val splits under " + paths.root.string() +
                             " come from different worlds");
  }
  Dataset data;
  data.spec = train.spec;
  data.question_vocab = std::move(train.question_vocab);
  data.answer_vocab = std::move(train.answer_vocab);
  data.train = std::move(train.examples);
  data.val = std::move(val.examples);
  return data;
}

ParaphraseResult cmd_paraphrase(const RunConfig& config) {
  config.validate();
  const RunPaths paths{config.out};
  const bool toy = config.lexicons[0].empty() && config.lexicons[1].empty();
  if (!toy) {
    for (const auto& p : config.lexicons) {
      if (p.empty() || !fs::exists(p)) {
        throw std::runtime_error("lexicon file '" + p.string() + "' not found");
      }
    }
  }
  Dataset data = load_dataset(paths);

  std::vector<LexiconEntry> first, second;
  if (toy) {
    std::tie(first, second) = build_toy_lexicons(toy_lexicon_spec(data.spec, config.lexicon_seed()));
    ensure_parent(paths.lexicon(0));
    save_lexicon(paths.lexicon(0), first);
    save_lexicon(paths.lexicon(1), second);
  } else {
    first = load_lexicon(config.lexicons[0]);
    second = load_lexicon(config.lexicons[1]);
  }
  const auto pair = make_pivot_pair(first, second);
  const auto& words = data.question_vocab.words();
  const Paraphraser paraphraser(*pair.first, *pair.second,
                                std::unordered_set<std::string>(words.begin(), words.end()),
                                config.paraphrase);

  std::vector<VqaTriplet> all = std::move(data.train);
  all.insert(all.end(), std::make_move_iterator(data.val.begin()),
             std::make_move_iterator(data.val.end()));
  const auto cache = paraphrase_examples(paraphraser, all, data.question_vocab, config.workers);

  ParaphraseResult result;
  result.examples = all.size();
  result.covered = attach_paraphrases(all, cache, data.question_vocab, config.paraphrase.top_k);
  result.cache = paths.paraphrase_cache();
  save_paraphrase_cache(result.cache, cache);
  return result;
}

TrainCommandResult cmd_train(const RunConfig& config, TrainingMode mode,
                             const EpochCallback& on_epoch) {
  config.validate();
  const RunPaths paths{config.out};
  Dataset data = load_dataset(paths);
  const auto schedule = config.resolved_training();

  TrainCommandResult result;
  if (mode == TrainingMode::kAdversarial) {
    const auto cache = require_cache(paths);
    result.paraphrased_examples = attach_paraphrases(data.train, cache, data.question_vocab,
                                                     schedule.paraphrases_per_question);
  }
  const auto trained =
      train(schedule, mode, dims_for(config, data), data.train, data.val, data.spec.v_max, on_epoch);

  result.checkpoint = paths.checkpoint(mode);
  result.epoch_log = paths.epoch_log(mode);
  ensure_parent(result.checkpoint);
  save_checkpoint(result.checkpoint,
                  {trained.params, data.question_vocab.words(), data.answer_vocab.words()});
  write_file_atomic(result.epoch_log, epoch_log_csv(trained.log));
  result.final_val_accuracy = trained.log.empty() ? 0.0 : trained.log.back().val_accuracy;
  return result;
}

void check_compatible(const Checkpoint& checkpoint, const Dataset& data,
                      const fs::path& checkpoint_path) {
  const ModelDims& have = checkpoint.params.dims();
  const ModelDims want = data.model_dims(have.d_emb, have.d_hidden);
  if (!(have == want)) {
    throw std::runtime_error("checkpoint " + checkpoint_path.string() + " has dims " +
                             describe(have) + " but the dataset needs " + describe(want));
  }
  if (checkpoint.question_vocab != data.question_vocab.words() ||
      checkpoint.answer_vocab != data.answer_vocab.words()) {
    throw std::runtime_error("checkpoint " + checkpoint_path.string() +
                             " was trained with different vocabularies than the dataset");
  }
}

std::vector<EvalReport> cmd_evaluate(const RunConfig& config,
                                     const std::vector<TrainingMode>& modes) {
  config.validate();
  if (modes.empty()) throw std::invalid_argument("evaluate needs at least one model");
  const RunPaths paths{config.out};
  Dataset data = load_dataset(paths);
  if (fs::exists(paths.paraphrase_cache())) {
    attach_paraphrases(data.val, load_paraphrase_cache(paths.paraphrase_cache()),
                       data.question_vocab, 1);
  }
  std::vector<Checkpoint> checkpoints;
  for (auto mode : modes) {
    const auto path = paths.checkpoint(mode);
    if (!fs::exists(path)) {
      throw std::runtime_error(std::string("checkpoint ") + path.string() +
                               " not found; run 'train --mode " + training_mode_name(mode) +
                               "' first");
    }
    checkpoints.push_back(load_checkpoint(path));
    check_compatible(checkpoints.back(), data, path);
  }
  const std::string echo = to_json_value(config).dump();
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    auto report = robustness_report(checkpoints[i].params, data.val, config.attackers,
                                    data.spec.v_max, config.eval_seed(), config.workers);
    report.model = training_mode_name(modes[i]);
    report.config_echo = echo;
    reports.push_back(std::move(report));
  }
  write_file_atomic(paths.report(), report_csv(reports));
  return reports;
}

namespace {

struct SweepRow {
  std::string grid;
  std::string model;
  std::size_t period_start = 0;
  std::size_t period_end = 0;
  double fraction = 1.0;
  std::string kind = "none";
  double epsilon = 0.0;
  double alpha = 0.0;
  std::size_t iterations = 0;

  std::string key() const {
    return grid + ',' + model + ',' + std::to_string(period_start) + ',' +
           std::to_string(period_end) + ',' + num(fraction) + ',' + kind + ',' + num(epsilon) +
           ',' + num(alpha) + ',' + std::to_string(iterations);
  }
};

/// Sweep CSV kept in memory and rewritten after every new cell.
class SweepFile {
 public:
  explicit SweepFile(fs::path path) : path_(std::move(path)) {
    if (!fs::exists(path_)) return;
    std::istringstream in(read_text_file(path_));
    std::string line;
    if (!std::getline(in, line) || line != kSweepHeader) {
      throw std::runtime_error("sweep file " + path_.string() + " has an unexpected header");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::size_t commas = 0, cut = std::string::npos;
      for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == ',' && ++commas == 9) {
          cut = i;
          break;
        }
      }
      if (cut == std::string::npos) {
        throw std::runtime_error("sweep file " + path_.string() + " has a malformed row: " + line);
      }
      keys_.insert(line.substr(0, cut));
      lines_.push_back(line);
    }
  }

  bool has(const SweepRow& row) const { return keys_.count(row.key()) != 0; }

  void add(const SweepRow& row, double clean, double attacked) {
    lines_.push_back(row.key() + ',' + num(clean) + ',' + num(attacked));
    keys_.insert(row.key());
    std::string text = std::string(kSweepHeader) + "\n";
    for (const auto& l : lines_) text += l + "\n";
    write_file_atomic(path_, text);
  }

 private:
  fs::path path_;
  std::set<std::string> keys_;
  std::vector<std::string> lines_;
};

double attacked_accuracy(const VqaModelParams& params, const std::vector<VqaTriplet>& examples,
                         const AttackConfig& attack, double v_max, std::uint64_t seed,
                         std::size_t workers) {
  return accuracy(
      attacked_predictions(params, examples, attack, v_max, derive_seed(seed, "attacker", 0),
                           false, workers),
      answers_of(examples));
}

}  // namespace

SweepResult cmd_sweep(const RunConfig& config,
                      const std::function<void(const std::string&)>& on_cell) {
  config.validate();
  const RunPaths paths{config.out};
  Dataset data = load_dataset(paths);
  const double v_max = data.spec.v_max;
  const auto answers = answers_of(data.val);
  const ModelDims dims = dims_for(config, data);

  std::vector<double> epsilons, alphas;
  for (double e : config.sweep.epsilons) epsilons.push_back(rescale_budget(e, v_max));
  for (double a : config.sweep.alphas) alphas.push_back(rescale_budget(a, v_max));
  const auto cells = sweep_grid(config.sweep.kinds, epsilons, alphas, config.sweep.iterations);

  std::vector<TrainingMode> modes;
  for (auto mode : {TrainingMode::kVanilla, TrainingMode::kAdversarial}) {
    if (fs::exists(paths.checkpoint(mode))) modes.push_back(mode);
  }
  if (modes.empty() && config.sweep.periods.empty() && config.sweep.fractions.empty()) {
    throw std::runtime_error("sweep found no checkpoint under " + paths.root.string() +
                             " and no period or fraction grid; run the 'train' command first");
  }

  SweepResult result;
  result.csv = paths.sweep();
  ensure_parent(result.csv);
  SweepFile file(result.csv);
  auto note = [&](const SweepRow& row) {
    if (on_cell) on_cell(row.key());
  };

  for (auto mode : modes) {
    std::optional<Checkpoint> checkpoint;
    double clean = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto attack = to_attack(cells[c], LabelPolicy::kTrueLabel);
      SweepRow row{"attack", training_mode_name(mode), 0, 0, 1.0, attack_kind_name(attack.kind),
                   attack.epsilon, attack.alpha, attack.iterations};
      if (file.has(row)) {
        ++result.skipped;
        continue;
      }
      if (!checkpoint) {
        checkpoint = load_checkpoint(paths.checkpoint(mode));
        check_compatible(*checkpoint, data, paths.checkpoint(mode));
        clean = accuracy(predict_all(checkpoint->params, data.val, config.workers), answers);
      }
      const SweepCell one[] = {cells[c]};
      const double attacked = attacker_sweep(checkpoint->params, data.val, one,
                                             LabelPolicy::kTrueLabel, v_max, config.eval_seed(),
                                             config.workers)
                                  .front();
      file.add(row, clean, attacked);
      ++result.computed;
      note(row);
    }
  }

  const bool needs_cache = !config.sweep.periods.empty() || !config.sweep.fractions.empty();
  if (needs_cache) {
    const auto cache = require_cache(paths);
    attach_paraphrases(data.train, cache, data.question_vocab,
                       config.training.paraphrases_per_question);
  }
  const auto base = config.resolved_training();
  const auto& train_attack = base.attack;

  for (const auto& [start, end] : config.sweep.periods) {
    SweepRow row{"period", "adversarial", start, end, 1.0, attack_kind_name(train_attack.kind),
                 train_attack.epsilon, train_attack.alpha, train_attack.iterations};
    if (file.has(row)) {
      ++result.skipped;
      continue;
    }
    auto schedule = base;
    schedule.adv_start = start;
    schedule.adv_end = end;
    const auto trained =
        train(schedule, TrainingMode::kAdversarial, dims, data.train, {}, v_max);
    const double clean = accuracy(predict_all(trained.params, data.val, config.workers), answers);
    file.add(row, clean,
             attacked_accuracy(trained.params, data.val, train_attack, v_max, config.eval_seed(),
                               config.workers));
    ++result.computed;
    note(row);
  }

  for (double f : config.sweep.fractions) {
    const auto subset = training_subset(data.train, f);
    for (auto mode : {TrainingMode::kVanilla, TrainingMode::kAdversarial}) {
      SweepRow row{"fraction", training_mode_name(mode), base.adv_start, base.adv_end, f,
                   attack_kind_name(train_attack.kind), train_attack.epsilon, train_attack.alpha,
                   train_attack.iterations};
      if (file.has(row)) {
        ++result.skipped;
        continue;
      }
      const auto trained = train(base, mode, dims, subset, {}, v_max);
      const double clean =
          accuracy(predict_all(trained.params, data.val, config.workers), answers);
      file.add(row, clean,
               attacked_accuracy(trained.params, data.val, train_attack, v_max,
                                 config.eval_seed(), config.workers));
      ++result.computed;
      note(row);
    }
  }
  return result;
}

}  // namespace vqaug
