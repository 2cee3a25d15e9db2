#pragma once

// Paraphrase generation by round-trip translation through pivot languages.
//
// For a source question E1 each pivot language contributes a mixture of its
// K-best translations F_i weighted by their renormalized probabilities; the
// per-language next-word distributions are averaged, and the product of the
// averaged step probabilities gives P(E2 | E1). Candidates are scored by
// min(1, P(q'|q) / P(q|q)) with a penalty for large edits or unknown words.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vqaug/vocab.hpp"

namespace vqaug {

inline constexpr const char* kEndOfSentence = "</s>";

using Sentence = std::vector<std::string>;

struct PivotTranslation {
  Sentence tokens;
  double prob = 0.0;  // P(F_i | E1)
};

/// Source-to-pivot and pivot-to-target behavior of one pivot language.
class TranslationModel {
 public:
  virtual ~TranslationModel() = default;

  /// Target-side vocabulary; index 0 is the end-of-sentence symbol.
  virtual const Vocabulary& target_vocab() const = 0;

  /// Up to k translations of source with positive probability, most probable
  /// first.
  virtual std::vector<PivotTranslation> kbest(const Sentence& source, std::size_t k) const = 0;

  /// P(y_t = w | y_<t, pivot) over target_vocab(); sums to 1.
  virtual std::vector<double> next_word_dist(const Sentence& pivot, const Sentence& prefix) const = 0;
};

/// One lexicon record: an English word, one of its pivot forms, and where
/// that pivot form translates back to.
struct LexiconEntry {
  std::string english;
  std::string pivot;
  double forward_prob = 0.0;
  std::vector<std::pair<std::string, double>> reverse;
};

/// Tab-separated: english, pivot, forward prob, "syn:prob,syn:prob".
std::vector<LexiconEntry> parse_lexicon(std::istream& in);
void write_lexicon(std::ostream& out, const std::vector<LexiconEntry>& entries);
std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path);
void save_lexicon(const std::filesystem::path& path, const std::vector<LexiconEntry>& entries);

/// Shared target vocabulary for a set of lexicons: end-of-sentence symbol
/// followed by every reverse synonym in sorted order.
std::shared_ptr<const Vocabulary> make_target_vocab(const std::vector<std::vector<LexiconEntry>>& lexicons);

/// Word-by-word pivot language backed by a bilingual lexicon. Translation is
/// monotone, so every pivot sentence has the source length.
class ToyPivotLanguage final : public TranslationModel {
 public:
  ToyPivotLanguage(std::string name, const std::vector<LexiconEntry>& entries,
                   std::shared_ptr<const Vocabulary> target);

  const std::string& name() const { return name_; }
  const Vocabulary& target_vocab() const override { return *target_; }
  std::vector<PivotTranslation> kbest(const Sentence& source, std::size_t k) const override;
  std::vector<double> next_word_dist(const Sentence& pivot, const Sentence& prefix) const override;

  /// Forward options of an English word, in lexicon order.
  const std::vector<std::pair<std::string, double>>& forward_options(const std::string& english) const;
  const std::vector<std::pair<std::size_t, double>>& reverse_options(const std::string& pivot) const;

 private:
  std::string name_;
  std::shared_ptr<const Vocabulary> target_;
  std::unordered_map<std::string, std::vector<std::pair<std::string, double>>> forward_;
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, double>>> reverse_;
};

struct ToyLexiconSpec {
  /// Canonical word -> in-vocabulary alternates and out-of-vocabulary alternates.
  std::vector<std::string> words;
  std::map<std::string, std::vector<std::string>> synonyms;
  std::map<std::string, std::vector<std::string>> foreign_synonyms;
  std::uint64_t seed = 0;
};

/// Two synthetic pivot languages with disjoint word forms. Each English word
/// gets 1-2 pivot forms; each pivot form translates back to the word itself
/// plus up to two members of its synonym group.
std::pair<std::vector<LexiconEntry>, std::vector<LexiconEntry>> build_toy_lexicons(
    const ToyLexiconSpec& spec);

/// sum_i w_i * next_word_dist(F_i, prefix) with w renormalized over kbest.
std::vector<double> pivot_next_word(const TranslationModel& model,
                                    const std::vector<PivotTranslation>& kbest,
                                    const Sentence& prefix);

/// Arithmetic mean of two distributions over the same vocabulary.
std::vector<double> multilingual_next_word(const std::vector<double>& first,
                                           const std::vector<double>& second);

/// Word-level Levenshtein distance with unit costs.
std::size_t edit_distance(const Sentence& a, const Sentence& b);

struct ParaphraseSettings {
  std::size_t pivots = 4;          // K-best translations per language
  std::size_t beam_width = 8;
  std::size_t max_candidates = 16;
  std::size_t top_k = 1;
  std::size_t edit_threshold = 4;  // e
  double penalty = -10.0;          // lambda

  void validate() const;
};

struct ParaphraseCandidate {
  Sentence tokens;
  double sentence_prob = 0.0;  // P(E2 | E1)
  double raw_score = 0.0;      // min(1, P(q'|q) / P(q|q))
  double score = 0.0;          // raw_score plus the penalty when it applies
  std::size_t edit_distance = 0;
  bool penalized = false;      // low confidence
};

/// Multi-pivot, multi-lingual paraphraser over exactly two pivot languages.
class Paraphraser {
 public:
  Paraphraser(const TranslationModel& first, const TranslationModel& second,
              std::unordered_set<std::string> known_words, ParaphraseSettings settings = {});

  const ParaphraseSettings& settings() const { return settings_; }
  const Vocabulary& target_vocab() const { return first_.target_vocab(); }

  /// Averaged next-word distribution for source E1 after prefix.
  std::vector<double> next_word(const Sentence& source, const Sentence& prefix) const;

  /// Product of averaged step probabilities of E2 followed by end of
  /// sentence. Exactly 0 when any step is impossible.
  double sentence_prob(const Sentence& source, const Sentence& candidate) const;

  /// Beam search; never returns the source itself. Sorted by probability,
  /// ties lexicographic.
  std::vector<ParaphraseCandidate> decode_candidates(const Sentence& source) const;

  /// Throws std::domain_error when P(q|q) = 0.
  ParaphraseCandidate score(const Sentence& question, const Sentence& candidate) const;
  double semantic_score(const Sentence& question, const Sentence& candidate) const {
    return score(question, candidate).score;
  }

  /// Top-k candidates by score, then probability, then tokens.
  std::vector<ParaphraseCandidate> qadvgen(const Sentence& question) const;
  std::vector<ParaphraseCandidate> qadvgen(const Sentence& question, std::size_t k) const;

  /// Ranks already-scored candidates; result independent of input order.
  static void rank(std::vector<ParaphraseCandidate>& candidates);

 private:
  struct Pivots {
    std::vector<PivotTranslation> first;
    std::vector<PivotTranslation> second;
  };
  Pivots pivots_for(const Sentence& source) const;
  std::vector<double> next_word(const Pivots& pivots, const Sentence& prefix) const;
  double sentence_prob(const Pivots& pivots, const Sentence& candidate) const;

  const TranslationModel& first_;
  const TranslationModel& second_;
  std::unordered_set<std::string> known_;
  ParaphraseSettings settings_;
};

/// question id -> ranked candidates
using ParaphraseCache = std::map<std::size_t, std::vector<ParaphraseCandidate>>;

/// JSON lines, one record per question id.
void save_paraphrase_cache(const std::filesystem::path& path, const ParaphraseCache& cache);
ParaphraseCache load_paraphrase_cache(const std::filesystem::path& path);
std::string serialize_paraphrase_cache(const ParaphraseCache& cache);

}  // namespace vqaug
