#include "vqaug/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vqaug/binary_io.hpp"
#include "vqaug/json_value.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

namespace {

constexpr const char* kSplitMagic = "VQAUG-DATASET 1";
constexpr const char* kColorSlot = "<color>";
constexpr const char* kShapeSlot = "<shape>";
constexpr const char* kSizeSlot = "<size>";

bool is_slot(const std::string& w) { return w == kColorSlot || w == kShapeSlot || w == kSizeSlot; }

bool has_slot(const QuestionTemplate& t, const char* slot) {
  const auto words = split_words(t.pattern);
  return std::find(words.begin(), words.end(), slot) != words.end();
}

// Slots each kind must fill to have a well-defined answer.
std::vector<const char*> required_slots(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::kColorOf: return {kShapeSlot};
    case QuestionKind::kCount: return {kShapeSlot};
    case QuestionKind::kExists: return {kColorSlot, kShapeSlot};
    case QuestionKind::kShapeOf: return {kColorSlot};
    case QuestionKind::kSizeOf: return {kColorSlot, kShapeSlot};
  }
  return {};
}

}  // namespace

const char* question_kind_name(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::kColorOf: return "color_of";
    case QuestionKind::kCount: return "count";
    case QuestionKind::kExists: return "exists";
    case QuestionKind::kShapeOf: return "shape_of";
    case QuestionKind::kSizeOf: return "size_of";
  }
  return "?";
}

QuestionKind parse_question_kind(const std::string& name) {
  for (auto k : {QuestionKind::kColorOf, QuestionKind::kCount, QuestionKind::kExists,
                 QuestionKind::kShapeOf, QuestionKind::kSizeOf}) {
    if (name == question_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown question kind '" + name + "'");
}

WorldSpec WorldSpec::defaults() {
  WorldSpec s;
  s.templates = {
      {QuestionKind::kColorOf, "what color is the <shape>"},
      {QuestionKind::kCount, "how many <shape> are there"},
      {QuestionKind::kExists, "is there a <color> <shape> in the image"},
      {QuestionKind::kShapeOf, "what shape is the <color> object"},
      {QuestionKind::kSizeOf, "what size is the <color> <shape>"},
  };
  s.synonyms = {
      {"what", {"which"}},     {"color", {"colour"}},  {"shape", {"form"}},
      {"the", {"this"}},       {"image", {"picture", "photo"}},
      {"object", {"thing"}},   {"cube", {"block"}},    {"sphere", {"ball"}},
      {"cylinder", {"tube"}},  {"disk", {"disc"}},     {"red", {"crimson"}},
      {"blue", {"azure"}},     {"green", {"emerald"}}, {"yellow", {"golden"}},
      {"small", {"tiny"}},     {"large", {"big"}},
  };
  s.foreign_synonyms = {
      {"color", {"hue"}},
      {"object", {"item"}},
      {"image", {"snapshot"}},
  };
  return s;
}

std::vector<std::string> WorldSpec::problems() const {
  std::vector<std::string> out;
  if (train_size == 0) out.push_back("world.train_size must be positive");
  if (val_size == 0) out.push_back("world.val_size must be positive");
  if (regions == 0) out.push_back("world.regions must be positive");
  if (colors.empty()) out.push_back("world.colors is empty");
  if (shapes.empty()) out.push_back("world.shapes is empty");
  if (templates.empty()) out.push_back("world.templates is empty");
  const std::size_t needed = colors.size() + shapes.size() + sizes.size() + 1;
  if (feature_dim < needed) {
    out.push_back("world.feature_dim " + std::to_string(feature_dim) + " cannot hold " +
                  std::to_string(needed) + " attribute dims");
  }
  if (min_objects < 1 || min_objects > regions) {
    out.push_back("world.min_objects must lie in [1, regions]");
  }
  if (max_count < 1) out.push_back("world.max_count must be positive");
  if (!(v_max > 0.0)) out.push_back("world.v_max must be positive");
  if (!(noise >= 0.0)) out.push_back("world.noise must be >= 0");
  if (!(base_level >= 0.0) || base_level + amplitude > v_max) {
    out.push_back("world.base_level + amplitude must lie within [0, v_max]");
  }
  for (const auto& t : templates) {
    for (const auto& w : split_words(t.pattern)) {
      if (w.front() == '<' && !is_slot(w)) {
        out.push_back("template '" + t.pattern + "' uses unknown placeholder " + w);
      }
    }
    if (has_slot(t, kColorSlot) && colors.empty()) {
      out.push_back("template '" + t.pattern + "' references <color> but no colors are defined");
    }
    if (has_slot(t, kShapeSlot) && shapes.empty()) {
      out.push_back("template '" + t.pattern + "' references <shape> but no shapes are defined");
    }
    if (has_slot(t, kSizeSlot) && sizes.empty()) {
      out.push_back("template '" + t.pattern + "' references <size> but no sizes are defined");
    }
    if (t.kind == QuestionKind::kSizeOf && sizes.empty()) {
      out.push_back("template '" + t.pattern + "' asks for a size but no sizes are defined");
    }
    for (const char* slot : required_slots(t.kind)) {
      if (!has_slot(t, slot)) {
        out.push_back("template '" + t.pattern + "' of kind " + question_kind_name(t.kind) +
                      " needs a " + slot + " placeholder");
      }
    }
  }
  return out;
}

void WorldSpec::validate() const {
  const auto found = problems();
  if (found.empty()) return;
  std::string message = "invalid world spec:";
  for (const auto& p : found) message += "\n  - " + p;
  throw std::invalid_argument(message);
}

void to_json(nlohmann::json& j, const QuestionTemplate& t) {
  j = {{"kind", question_kind_name(t.kind)}, {"pattern", t.pattern}};
}

void from_json(const nlohmann::json& j, QuestionTemplate& t) {
  t.kind = parse_question_kind(j.at("kind").get<std::string>());
  t.pattern = j.at("pattern").get<std::string>();
}

void to_json(nlohmann::json& j, const WorldSpec& s) {
  j = {
      {"train_size", s.train_size}, {"val_size", s.val_size},
      {"regions", s.regions},       {"feature_dim", s.feature_dim},
      {"min_objects", s.min_objects}, {"max_count", s.max_count},
      {"colors", s.colors},         {"shapes", s.shapes},
      {"sizes", s.sizes},           {"base_level", s.base_level},
      {"amplitude", s.amplitude},   {"noise", s.noise},
      {"v_max", s.v_max},           {"templates", s.templates},
      {"synonyms", s.synonyms},     {"foreign_synonyms", s.foreign_synonyms},
      {"seed", s.seed},
  };
}

void from_json(const nlohmann::json& j, WorldSpec& s) {
  WorldSpec d = WorldSpec::defaults();
  s.train_size = json_value(j, "train_size", d.train_size);
  s.val_size = json_value(j, "val_size", d.val_size);
  s.regions = json_value(j, "regions", d.regions);
  s.feature_dim = json_value(j, "feature_dim", d.feature_dim);
  s.min_objects = json_value(j, "min_objects", d.min_objects);
  s.max_count = json_value(j, "max_count", d.max_count);
  s.colors = json_value(j, "colors", d.colors);
  s.shapes = json_value(j, "shapes", d.shapes);
  s.sizes = json_value(j, "sizes", d.sizes);
  s.base_level = json_value(j, "base_level", d.base_level);
  s.amplitude = json_value(j, "amplitude", d.amplitude);
  s.noise = json_value(j, "noise", d.noise);
  s.v_max = json_value(j, "v_max", d.v_max);
  s.templates = json_value(j, "templates", d.templates);
  s.synonyms = json_value(j, "synonyms", d.synonyms);
  s.foreign_synonyms = json_value(j, "foreign_synonyms", d.foreign_synonyms);
  s.seed = json_value(j, "seed", d.seed);
}

Vocabulary build_question_vocab(const WorldSpec& spec) {
  std::vector<std::string> words;
  std::set<std::string> seen;
  auto add = [&](const std::string& w) {
    if (!is_slot(w) && seen.insert(w).second) words.push_back(w);
  };
  for (const auto& t : spec.templates) {
    for (const auto& w : split_words(t.pattern)) add(w);
  }
  for (const auto& group : {spec.colors, spec.shapes, spec.sizes}) {
    for (const auto& w : group) add(w);
  }
  for (const auto& [word, alternates] : spec.synonyms) {
    for (const auto& alt : alternates) add(alt);
  }
  return Vocabulary(std::move(words));
}

Vocabulary build_answer_vocab(const WorldSpec& spec) {
  std::vector<std::string> words;
  for (const auto& group : {spec.colors, spec.shapes, spec.sizes}) {
    words.insert(words.end(), group.begin(), group.end());
  }
  words.emplace_back("yes");
  words.emplace_back("no");
  for (std::size_t c = 1; c <= spec.max_count; ++c) words.push_back(std::to_string(c));
  return Vocabulary(std::move(words));
}

ModelDims Dataset::model_dims(std::size_t d_emb, std::size_t d_hidden) const {
  ModelDims d;
  d.vocab_size = question_vocab.size();
  d.d_emb = d_emb;
  d.d_hidden = d_hidden;
  d.regions = spec.regions;
  d.feature_dim = spec.feature_dim;
  d.answers = answer_vocab.size();
  return d;
}

Tensor render_scene(const WorldSpec& spec, const std::vector<RegionAttributes>& scene,
                    std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
  const std::size_t shape_off = spec.colors.size();
  const std::size_t size_off = shape_off + spec.shapes.size();
  const std::size_t object_dim = size_off + spec.sizes.size();
  Tensor v({spec.regions, spec.feature_dim}, spec.base_level);
  for (std::size_t k = 0; k < spec.regions; ++k) {
    const auto& r = scene[k];
    if (r.object) {
      v.at(k, r.color) += spec.amplitude;
      v.at(k, shape_off + r.shape) += spec.amplitude;
      if (!spec.sizes.empty()) v.at(k, size_off + r.size) += spec.amplitude;
      v.at(k, object_dim) += spec.amplitude;
    }
    for (std::size_t c = 0; c < spec.feature_dim; ++c) {
      double x = v.at(k, c);
      if (spec.noise > 0.0) x += noise(rng);
      v.at(k, c) = std::clamp(x, 0.0, spec.v_max);
    }
  }
  return v;
}

namespace {

struct Instance {
  std::vector<std::string> words;
  std::size_t answer = 0;
};

std::vector<RegionAttributes> sample_scene(const WorldSpec& spec, Rng& rng) {
  std::uniform_int_distribution<std::size_t> count_dist(spec.min_objects, spec.regions);
  std::uniform_int_distribution<std::size_t> color_dist(0, spec.colors.size() - 1);
  std::uniform_int_distribution<std::size_t> shape_dist(0, spec.shapes.size() - 1);
  std::uniform_int_distribution<std::size_t> size_dist(0, spec.sizes.empty() ? 0 : spec.sizes.size() - 1);
  for (;;) {
    std::vector<RegionAttributes> scene(spec.regions);
    const std::size_t n = count_dist(rng);
    std::vector<std::size_t> per_shape(spec.shapes.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = scene[i];
      r.object = true;
      r.color = color_dist(rng);
      r.shape = shape_dist(rng);
      r.size = size_dist(rng);
      ++per_shape[r.shape];
    }
    if (*std::max_element(per_shape.begin(), per_shape.end()) > spec.max_count) continue;
    std::shuffle(scene.begin(), scene.end(), rng);
    return scene;
  }
}

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
  return items[d(rng)];
}

std::vector<std::string> fill(const QuestionTemplate& t, const WorldSpec& spec,
                              std::size_t color, std::size_t shape, std::size_t size) {
  std::vector<std::string> words;
  for (const auto& w : split_words(t.pattern)) {
    if (w == kColorSlot) words.push_back(spec.colors[color]);
    else if (w == kShapeSlot) words.push_back(spec.shapes[shape]);
    else if (w == kSizeSlot) words.push_back(spec.sizes[size]);
    else words.push_back(w);
  }
  return words;
}

// Tries to pose a question of template t about the scene; empty when the
// scene cannot support one (e.g. no uniquely identifiable object).
std::optional<Instance> pose(const QuestionTemplate& t, const WorldSpec& spec,
                             const Vocabulary& answers,
                             const std::vector<RegionAttributes>& scene, Rng& rng) {
  std::vector<const RegionAttributes*> objects;
  for (const auto& r : scene) {
    if (r.object) objects.push_back(&r);
  }
  auto count_if = [&](auto pred) {
    return static_cast<std::size_t>(std::count_if(objects.begin(), objects.end(),
                                                   [&](const RegionAttributes* r) { return pred(*r); }));
  };
  const std::size_t color_base = 0;
  const std::size_t shape_base = spec.colors.size();
  const std::size_t size_base = shape_base + spec.shapes.size();
  const std::size_t yes = answers.id("yes");
  const std::size_t no = answers.id("no");

  switch (t.kind) {
    case QuestionKind::kColorOf: {
      std::vector<const RegionAttributes*> unique;
      for (auto* r : objects) {
        if (count_if([&](const RegionAttributes& o) { return o.shape == r->shape; }) == 1) unique.push_back(r);
      }
      if (unique.empty()) return std::nullopt;
      const auto* r = pick(unique, rng);
      return Instance{fill(t, spec, r->color, r->shape, r->size), color_base + r->color};
    }
    case QuestionKind::kCount: {
      const auto* r = pick(objects, rng);
      const std::size_t n = count_if([&](const RegionAttributes& o) { return o.shape == r->shape; });
      return Instance{fill(t, spec, r->color, r->shape, r->size), answers.id(std::to_string(n))};
    }
    case QuestionKind::kExists: {
      std::bernoulli_distribution coin(0.5);
      if (coin(rng)) {
        const auto* r = pick(objects, rng);
        return Instance{fill(t, spec, r->color, r->shape, r->size), yes};
      }
      std::vector<std::pair<std::size_t, std::size_t>> absent;
      for (std::size_t c = 0; c < spec.colors.size(); ++c) {
        for (std::size_t s = 0; s < spec.shapes.size(); ++s) {
          if (count_if([&](const RegionAttributes& o) { return o.color == c && o.shape == s; }) == 0) {
            absent.emplace_back(c, s);
          }
        }
      }
      if (absent.empty()) return std::nullopt;
      const auto [c, s] = pick(absent, rng);
      return Instance{fill(t, spec, c, s, 0), no};
    }
    case QuestionKind::kShapeOf: {
      std::vector<const RegionAttributes*> unique;
      for (auto* r : objects) {
        if (count_if([&](const RegionAttributes& o) { return o.color == r->color; }) == 1) unique.push_back(r);
      }
      if (unique.empty()) return std::nullopt;
      const auto* r = pick(unique, rng);
      return Instance{fill(t, spec, r->color, r->shape, r->size), shape_base + r->shape};
    }
    case QuestionKind::kSizeOf: {
      std::vector<const RegionAttributes*> unique;
      for (auto* r : objects) {
        if (count_if([&](const RegionAttributes& o) {
              return o.color == r->color && o.shape == r->shape;
            }) == 1) {
          unique.push_back(r);
        }
      }
      if (unique.empty()) return std::nullopt;
      const auto* r = pick(unique, rng);
      return Instance{fill(t, spec, r->color, r->shape, r->size), size_base + r->size};
    }
  }
  return std::nullopt;
}

VqaTriplet make_example(const WorldSpec& spec, const Vocabulary& qvocab, const Vocabulary& answers,
                        std::size_t id) {
  Rng rng = make_rng(spec.seed, "example", id);
  std::uniform_int_distribution<std::size_t> template_dist(0, spec.templates.size() - 1);
  const std::size_t ti = template_dist(rng);
  const auto& tmpl = spec.templates[ti];
  for (int attempt = 0; attempt < 10000; ++attempt) {
    auto scene = sample_scene(spec, rng);
    auto inst = pose(tmpl, spec, answers, scene, rng);
    if (!inst) continue;
    VqaTriplet ex;
    ex.id = id;
    ex.visual = render_scene(spec, scene, derive_seed(spec.seed, "render", id));
    ex.question.tokens = qvocab.encode(inst->words);
    ex.question.text = join_words(inst->words);
    ex.answer = inst->answer;
    ex.scene = std::move(scene);
    ex.template_index = ti;
    return ex;
  }
  throw std::runtime_error("template '" + tmpl.pattern + "' could not be instantiated");
}

}  // namespace

Dataset generate_dataset(const WorldSpec& spec) {
  spec.validate();
  Dataset data;
  data.spec = spec;
  data.question_vocab = build_question_vocab(spec);
  data.answer_vocab = build_answer_vocab(spec);
  data.train.reserve(spec.train_size);
  data.val.reserve(spec.val_size);
  for (std::size_t i = 0; i < spec.train_size; ++i) {
    data.train.push_back(make_example(spec, data.question_vocab, data.answer_vocab, i));
  }
  for (std::size_t i = 0; i < spec.val_size; ++i) {
    data.val.push_back(
        make_example(spec, data.question_vocab, data.answer_vocab, spec.train_size + i));
  }
  return data;
}

std::vector<VqaTriplet> training_subset(const std::vector<VqaTriplet>& train, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("training fraction must lie in (0, 1], got " +
                                std::to_string(fraction));
  }
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(train.size()) - 1e-9));
  if (n == 0) throw std::invalid_argument("training fraction yields an empty split");
  return {train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n)};
}

void save_split(const std::filesystem::path& path, const std::string& split, const Dataset& data,
                const std::vector<VqaTriplet>& examples) {
  const auto& s = data.spec;
  nlohmann::json meta = {
      {"split", split},
      {"count", examples.size()},
      {"regions", s.regions},
      {"feature_dim", s.feature_dim},
      {"question_vocab", data.question_vocab.words()},
      {"answer_vocab", data.answer_vocab.words()},
      {"world", s},
      {"seed", s.seed},
  };
  std::ostringstream out(std::ios::binary);
  out << kSplitMagic << '\n' << meta.dump() << '\n';
  for (const auto& ex : examples) write_f64_le(out, ex.visual.values());
  for (const auto& ex : examples) {
    out << ex.id << '\t';
    for (std::size_t i = 0; i < ex.question.tokens.size(); ++i) {
      if (i) out << ' ';
      out << ex.question.tokens[i];
    }
    out << '\t' << ex.answer << '\n';
  }
  write_file_atomic(path, out.str());
}

SplitFile load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kSplitMagic) throw std::runtime_error(path.string() + " is not a dataset file");
  std::getline(in, line);
  const auto meta = nlohmann::json::parse(line);
  SplitFile f;
  f.split = meta.at("split").get<std::string>();
  f.spec = meta.at("world").get<WorldSpec>();
  f.question_vocab = Vocabulary(meta.at("question_vocab").get<std::vector<std::string>>());
  f.answer_vocab = Vocabulary(meta.at("answer_vocab").get<std::vector<std::string>>());
  const std::size_t count = meta.at("count");
  const std::size_t k = meta.at("regions");
  const std::size_t d = meta.at("feature_dim");
  f.examples.resize(count);
  for (auto& ex : f.examples) {
    ex.visual = Tensor({k, d});
    read_f64_le(in, ex.visual.values());
  }
  for (auto& ex : f.examples) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated record section in " + path.string());
    std::istringstream rec(line);
    std::string id, tokens, answer;
    std::getline(rec, id, '\t');
    std::getline(rec, tokens, '\t');
    std::getline(rec, answer, '\t');
    ex.id = std::stoull(id);
    std::istringstream tok(tokens);
    for (std::size_t t; tok >> t;) ex.question.tokens.push_back(t);
    ex.question.text = join_words(f.question_vocab.decode(ex.question.tokens));
    ex.answer = std::stoull(answer);
  }
  return f;
}

}  // namespace vqaug
