#include "vqaug/pipeline.hpp"

#include <map>
#include <unordered_set>

#include "vqaug/parallel.hpp"

namespace vqaug {

ToyLexiconSpec toy_lexicon_spec(const WorldSpec& world, std::uint64_t seed) {
  ToyLexiconSpec spec;
  spec.words = build_question_vocab(world).words();
  spec.synonyms = world.synonyms;
  spec.foreign_synonyms = world.foreign_synonyms;
  spec.seed = seed;
  return spec;
}

PivotPair make_pivot_pair(const std::vector<LexiconEntry>& first,
                          const std::vector<LexiconEntry>& second) {
  PivotPair pair;
  pair.target = make_target_vocab({first, second});
  pair.first = std::make_unique<ToyPivotLanguage>("pivot-a", first, pair.target);
  pair.second = std::make_unique<ToyPivotLanguage>("pivot-b", second, pair.target);
  return pair;
}

ParaphraseCache paraphrase_examples(const Paraphraser& paraphraser,
                                    const std::vector<VqaTriplet>& examples,
                                    const Vocabulary& question_vocab, std::size_t workers) {
  std::map<std::vector<std::size_t>, std::size_t> slot;
  std::vector<const Question*> distinct;
  for (const auto& ex : examples) {
    if (slot.emplace(ex.question.tokens, distinct.size()).second) distinct.push_back(&ex.question);
  }
  std::vector<std::vector<ParaphraseCandidate>> decoded(distinct.size());
  parallel_for(distinct.size(), workers, [&](std::size_t i) {
    decoded[i] = paraphraser.qadvgen(question_vocab.decode(distinct[i]->tokens));
  });
  ParaphraseCache cache;
  for (const auto& ex : examples) cache[ex.id] = decoded[slot.at(ex.question.tokens)];
  return cache;
}

bool usable_paraphrase(const ParaphraseCandidate& c, const Vocabulary& question_vocab) {
  if (c.penalized || c.tokens.empty()) return false;
  for (const auto& w : c.tokens) {
    if (!question_vocab.contains(w)) return false;
  }
  return true;
}

std::size_t attach_paraphrases(std::vector<VqaTriplet>& examples, const ParaphraseCache& cache,
                               const Vocabulary& question_vocab, std::size_t k) {
  std::size_t covered = 0;
  for (auto& ex : examples) {
    ex.paraphrases.clear();
    auto it = cache.find(ex.id);
    if (it == cache.end()) continue;
    for (const auto& c : it->second) {
      if (ex.paraphrases.size() == k) break;
      if (!usable_paraphrase(c, question_vocab)) continue;
      ex.paraphrases.push_back({question_vocab.encode(c.tokens), join_words(c.tokens)});
    }
    covered += ex.paraphrases.empty() ? 0 : 1;
  }
  return covered;
}

}  // namespace vqaug
