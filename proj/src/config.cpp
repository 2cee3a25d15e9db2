#include "vqaug/config.hpp"

#include <fstream>
#include <stdexcept>

#include "vqaug/json_value.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

RunConfig RunConfig::defaults() {
  RunConfig c;
  const double v_max = c.world.v_max;
  c.training.attack = AttackConfig::scaled_default(v_max);
  AttackConfig fgsm_attack = AttackConfig::scaled_default(v_max);
  fgsm_attack.kind = AttackKind::kFgsm;
  fgsm_attack.alpha = 0.0;
  fgsm_attack.iterations = 1;
  c.attackers = {fgsm_attack, AttackConfig::scaled_default(v_max),
                 AttackConfig::scaled_strong_pgd(v_max)};
  return c;
}

std::uint64_t RunConfig::world_seed() const { return derive_seed(seed, "world"); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, "train"); }
std::uint64_t RunConfig::lexicon_seed() const { return derive_seed(seed, "lexicon"); }
std::uint64_t RunConfig::eval_seed() const { return derive_seed(seed, "eval"); }

WorldSpec RunConfig::resolved_world() const {
  WorldSpec w = world;
  w.seed = world_seed();
  return w;
}

TrainingSchedule RunConfig::resolved_training() const {
  TrainingSchedule t = training;
  t.seed = train_seed();
  t.workers = workers;
  return t;
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> list = world.problems();
  if (d_emb < 1) list.push_back("model.d_emb must be >= 1");
  if (d_hidden < 1) list.push_back("model.d_hidden must be >= 1");
  for (auto& p : training.problems()) list.push_back(std::move(p));
  for (std::size_t i = 0; i < attackers.size(); ++i) {
    try {
      attackers[i].validate();
    } catch (const std::exception& e) {
      list.push_back("attackers[" + std::to_string(i) + "]: " + e.what());
    }
  }
  try {
    paraphrase.validate();
  } catch (const std::exception& e) {
    list.push_back(e.what());
  }
  if (lexicons.size() != 2) list.push_back("paraphrase.lexicons must list exactly two files");
  if (!(fraction > 0.0 && fraction <= 1.0)) list.push_back("fraction must lie in (0, 1]");
  if (workers < 1) list.push_back("workers must be >= 1");
  if (out.empty()) list.push_back("out must name a directory");
  if (sweep.kinds.empty()) list.push_back("sweep.kinds is empty");
  if (sweep.epsilons.empty()) list.push_back("sweep.epsilons is empty");
  for (double e : sweep.epsilons) {
    if (!(e >= 0.0)) list.push_back("sweep.epsilons must be >= 0");
  }
  for (double a : sweep.alphas) {
    if (!(a > 0.0)) list.push_back("sweep.alphas must be > 0");
  }
  if (sweep.iterations < 1) list.push_back("sweep.iterations must be >= 1");
  for (const auto& [s, e] : sweep.periods) {
    if (s > e || e > training.epochs) {
      list.push_back("sweep.periods entry (" + std::to_string(s) + ", " + std::to_string(e) +
                    ") must satisfy start <= end <= epochs");
    }
  }
  for (double f : sweep.fractions) {
    if (!(f > 0.0 && f <= 1.0)) list.push_back("sweep.fractions must lie in (0, 1]");
  }
  return list;
}

void RunConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::string message = "invalid configuration:";
  for (const auto& p : list) message += "\n  - " + p;
  throw std::invalid_argument(message);
}

nlohmann::json attack_to_json(const AttackConfig& c) {
  return {{"kind", attack_kind_name(c.kind)},
          {"epsilon", c.epsilon},
          {"alpha", c.alpha},
          {"iterations", c.iterations},
          {"label_policy", label_policy_name(c.label_policy)}};
}

AttackConfig attack_from_json(const nlohmann::json& j) {
  AttackConfig c;
  c.kind = parse_attack_kind(json_value(j, "kind", std::string("ifgsm")));
  c.epsilon = json_value(j, "epsilon", c.epsilon);
  c.alpha = json_value(j, "alpha", c.alpha);
  c.iterations = json_value(j, "iterations", c.iterations);
  c.label_policy = parse_label_policy(json_value(j, "label_policy", std::string("true")));
  return c;
}

nlohmann::json to_json_value(const RunConfig& c) {
  nlohmann::json world = c.world;
  world.erase("seed");
  nlohmann::json attackers = nlohmann::json::array();
  for (const auto& a : c.attackers) attackers.push_back(attack_to_json(a));
  const auto& t = c.training;
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : c.sweep.kinds) kinds.push_back(attack_kind_name(k));
  std::vector<std::string> lexicons;
  for (const auto& p : c.lexicons) lexicons.push_back(p.string());
  return {
      {"seed", c.seed},
      {"out", c.out.string()},
      {"fraction", c.fraction},
      {"workers", c.workers},
      {"world", world},
      {"model", {{"d_emb", c.d_emb}, {"d_hidden", c.d_hidden}}},
      {"training",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"base_lr", t.base_lr},
        {"decay", t.decay},
        {"decay_after", t.decay_after},
        {"decay_every", t.decay_every},
        {"adv_start", t.adv_start},
        {"adv_end", t.adv_end},
        {"adv_weight", t.adv_weight},
        {"stage_lr", t.stage_lr},
        {"paraphrases_per_question", t.paraphrases_per_question},
        {"init_scale", t.init_scale},
        {"attack", attack_to_json(t.attack)}}},
      {"attackers", attackers},
      {"paraphrase",
       {{"pivots", c.paraphrase.pivots},
        {"beam_width", c.paraphrase.beam_width},
        {"max_candidates", c.paraphrase.max_candidates},
        {"top_k", c.paraphrase.top_k},
        {"edit_threshold", c.paraphrase.edit_threshold},
        {"penalty", c.paraphrase.penalty},
        {"lexicons", lexicons}}},
      {"sweep",
       {{"kinds", kinds},
        {"epsilons", c.sweep.epsilons},
        {"alphas", c.sweep.alphas},
        {"iterations", c.sweep.iterations},
        {"periods", c.sweep.periods},
        {"fractions", c.sweep.fractions}}},
  };
}

namespace {

// Reads every section, recording failures instead of stopping at the first.
template <typename Fn>
void section(std::vector<std::string>& errors, const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    errors.push_back(std::string(name) + ": " + e.what());
  }
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c = RunConfig::defaults();
  std::vector<std::string> errors;
  section(errors, "seed", [&] { c.seed = json_value(j, "seed", c.seed); });
  section(errors, "out", [&] { c.out = json_value(j, "out", c.out.string()); });
  section(errors, "fraction", [&] { c.fraction = json_value(j, "fraction", c.fraction); });
  section(errors, "workers", [&] { c.workers = json_value(j, "workers", c.workers); });
  section(errors, "world", [&] {
    if (j.contains("world")) c.world = j.at("world").get<WorldSpec>();
  });
  section(errors, "model", [&] {
    const auto m = json_value(j, "model", nlohmann::json::object());
    c.d_emb = json_value(m, "d_emb", c.d_emb);
    c.d_hidden = json_value(m, "d_hidden", c.d_hidden);
  });
  section(errors, "training", [&] {
    const auto t = json_value(j, "training", nlohmann::json::object());
    auto& s = c.training;
    s.epochs = json_value(t, "epochs", s.epochs);
    s.batch_size = json_value(t, "batch_size", s.batch_size);
    s.base_lr = json_value(t, "base_lr", s.base_lr);
    s.decay = json_value(t, "decay", s.decay);
    s.decay_after = json_value(t, "decay_after", s.decay_after);
    s.decay_every = json_value(t, "decay_every", s.decay_every);
    s.adv_start = json_value(t, "adv_start", s.adv_start);
    s.adv_end = json_value(t, "adv_end", s.adv_end);
    s.adv_weight = json_value(t, "adv_weight", s.adv_weight);
    s.stage_lr = json_value(t, "stage_lr", s.stage_lr);
    s.paraphrases_per_question = json_value(t, "paraphrases_per_question", s.paraphrases_per_question);
    s.init_scale = json_value(t, "init_scale", s.init_scale);
    if (t.contains("attack")) s.attack = attack_from_json(t.at("attack"));
  });
  section(errors, "attackers", [&] {
    if (!j.contains("attackers")) return;
    c.attackers.clear();
    for (const auto& a : j.at("attackers")) c.attackers.push_back(attack_from_json(a));
  });
  section(errors, "paraphrase", [&] {
    const auto p = json_value(j, "paraphrase", nlohmann::json::object());
    auto& s = c.paraphrase;
    s.pivots = json_value(p, "pivots", s.pivots);
    s.beam_width = json_value(p, "beam_width", s.beam_width);
    s.max_candidates = json_value(p, "max_candidates", s.max_candidates);
    s.top_k = json_value(p, "top_k", s.top_k);
    s.edit_threshold = json_value(p, "edit_threshold", s.edit_threshold);
    s.penalty = json_value(p, "penalty", s.penalty);
    if (p.contains("lexicons")) {
      c.lexicons.clear();
      for (const auto& path : p.at("lexicons")) c.lexicons.emplace_back(path.get<std::string>());
    }
  });
  section(errors, "sweep", [&] {
    const auto s = json_value(j, "sweep", nlohmann::json::object());
    if (s.contains("kinds")) {
      c.sweep.kinds.clear();
      for (const auto& k : s.at("kinds")) c.sweep.kinds.push_back(parse_attack_kind(k));
    }
    c.sweep.epsilons = json_value(s, "epsilons", c.sweep.epsilons);
    c.sweep.alphas = json_value(s, "alphas", c.sweep.alphas);
    c.sweep.iterations = json_value(s, "iterations", c.sweep.iterations);
    c.sweep.periods = json_value(s, "periods", c.sweep.periods);
    c.sweep.fractions = json_value(s, "fractions", c.sweep.fractions);
  });
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  - " + e;
    throw std::invalid_argument(message);
  }
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw std::invalid_argument("override key '" + key + "' has an empty part");
    if (dot == std::string::npos) {
      if (!node->is_object() || !node->contains(part)) {
        throw std::invalid_argument("override key '" + key + "' does not name a setting");
      }
      (*node)[part] = value;
      return;
    }
    if (!node->is_object() || !node->contains(part) || !(*node)[part].is_object()) {
      throw std::invalid_argument("override key '" + key + "' does not name a setting");
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = to_json_value(RunConfig::defaults());
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    nlohmann::json file;
    try {
      in >> file;
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    doc.merge_patch(file);
  }
  std::vector<std::string> errors;
  for (const auto& o : overrides) {
    try {
      apply_override(doc, o);
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  RunConfig c;
  try {
    c = config_from_json(doc);
    for (auto& p : c.problems()) errors.push_back(std::move(p));
  } catch (const std::invalid_argument& e) {
    const std::string text = e.what();
    const std::string prefix = "invalid configuration:\n  - ";
    errors.push_back(text.rfind(prefix, 0) == 0 ? text.substr(prefix.size()) : text);
  }
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  - " + e;
    throw std::invalid_argument(message);
  }
  return c;
}

}  // namespace vqaug
