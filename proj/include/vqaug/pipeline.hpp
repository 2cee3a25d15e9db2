#pragma once

// Glue between the dataset and the paraphraser.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "vqaug/dataset.hpp"
#include "vqaug/paraphrase.hpp"

namespace vqaug {

/// Lexicon spec covering every question-vocabulary word of a world.
ToyLexiconSpec toy_lexicon_spec(const WorldSpec& world, std::uint64_t seed);

/// Two pivot languages sharing one target vocabulary.
struct PivotPair {
  std::shared_ptr<const Vocabulary> target;
  std::unique_ptr<ToyPivotLanguage> first;
  std::unique_ptr<ToyPivotLanguage> second;
};

PivotPair make_pivot_pair(const std::vector<LexiconEntry>& first,
                          const std::vector<LexiconEntry>& second);

/// Ranked candidates for every example, keyed by example id. Each distinct
/// question text is decoded once.
ParaphraseCache paraphrase_examples(const Paraphraser& paraphraser,
                                    const std::vector<VqaTriplet>& examples,
                                    const Vocabulary& question_vocab, std::size_t workers = 1);

/// A candidate can be fed to the model when it carries no penalty and every
/// word is in the question vocabulary.
bool usable_paraphrase(const ParaphraseCandidate& c, const Vocabulary& question_vocab);

/// Stores up to k usable candidates on each example; returns how many
/// examples received at least one.
std::size_t attach_paraphrases(std::vector<VqaTriplet>& examples, const ParaphraseCache& cache,
                               const Vocabulary& question_vocab, std::size_t k);

}  // namespace vqaug
