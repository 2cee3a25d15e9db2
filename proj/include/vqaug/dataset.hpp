#pragma once

// Synthetic shapes-world VQA data.
//
// Each image is K regions; a region is either background or one object with a
// color, a shape and a size. Its D-dimensional feature row holds scaled
// one-hot blocks [color | shape | size | objectness | padding] on top of a
// constant base level, plus gaussian noise, clamped to [0, v_max].

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vqaug/model.hpp"
#include "vqaug/tensor.hpp"
#include "vqaug/vocab.hpp"

namespace vqaug {

enum class QuestionKind { kColorOf, kCount, kExists, kShapeOf, kSizeOf };

const char* question_kind_name(QuestionKind kind);
QuestionKind parse_question_kind(const std::string& name);

struct QuestionTemplate {
  QuestionKind kind = QuestionKind::kColorOf;
  std::string pattern;  // words plus <color>, <shape>, <size> placeholders

  friend bool operator==(const QuestionTemplate&, const QuestionTemplate&) = default;
};

struct WorldSpec {
  std::size_t train_size = 32000;
  std::size_t val_size = 2000;
  std::size_t regions = 6;
  std::size_t feature_dim = 16;
  std::size_t min_objects = 2;
  std::size_t max_count = 4;
  std::vector<std::string> colors{"red", "blue", "green", "yellow"};
  std::vector<std::string> shapes{"cube", "sphere", "cylinder", "disk"};
  std::vector<std::string> sizes{"small", "large"};
  double base_level = 1.0;
  double amplitude = 1.25;
  double noise = 0.5;
  double v_max = 83.0;
  std::vector<QuestionTemplate> templates;
  /// Alternate surface forms that belong to the question vocabulary but never
  /// appear in generated questions.
  std::map<std::string, std::vector<std::string>> synonyms;
  /// Alternate forms outside the question vocabulary.
  std::map<std::string, std::vector<std::string>> foreign_synonyms;
  std::uint64_t seed = 7;

  static WorldSpec defaults();

  /// Collects every problem; throws std::invalid_argument listing them all.
  void validate() const;
  std::vector<std::string> problems() const;

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

void to_json(nlohmann::json& j, const WorldSpec& spec);
void from_json(const nlohmann::json& j, WorldSpec& spec);

struct RegionAttributes {
  bool object = false;
  std::size_t color = 0;
  std::size_t shape = 0;
  std::size_t size = 0;
};

struct VqaTriplet {
  std::size_t id = 0;
  Tensor visual;  // K x D
  Question question;
  std::size_t answer = 0;
  /// Stored paraphrases in score order; empty when none was generated.
  std::vector<Question> paraphrases;
  /// Latent scene the example was rendered from. Not persisted.
  std::vector<RegionAttributes> scene;
  std::size_t template_index = 0;
};

struct Dataset {
  WorldSpec spec;
  Vocabulary question_vocab;
  Vocabulary answer_vocab;
  std::vector<VqaTriplet> train;
  std::vector<VqaTriplet> val;

  ModelDims model_dims(std::size_t d_emb = 16, std::size_t d_hidden = 32) const;
};

Vocabulary build_question_vocab(const WorldSpec& spec);
Vocabulary build_answer_vocab(const WorldSpec& spec);

/// Pure function of spec (seed included). Example ids run 0..train_size-1
/// for train and continue through the validation split.
Dataset generate_dataset(const WorldSpec& spec);

/// First ceil(fraction * n) training examples; rejects fractions outside
/// (0, 1] or an empty result.
std::vector<VqaTriplet> training_subset(const std::vector<VqaTriplet>& train, double fraction);

/// Renders the feature row for a scene, deterministic in seed.
Tensor render_scene(const WorldSpec& spec, const std::vector<RegionAttributes>& scene,
                    std::uint64_t seed);

struct SplitFile {
  std::string split;
  WorldSpec spec;
  Vocabulary question_vocab;
  Vocabulary answer_vocab;
  std::vector<VqaTriplet> examples;
};

/// Layout: magic line, one-line JSON metadata, N*K*D little-endian doubles,
/// then one "id<TAB>token ids<TAB>answer id" line per example.
void save_split(const std::filesystem::path& path, const std::string& split, const Dataset& data,
                const std::vector<VqaTriplet>& examples);
SplitFile load_split(const std::filesystem::path& path);

}  // namespace vqaug
