#include "vqaug/paraphrase.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vqaug/binary_io.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

namespace {

constexpr double kNormTolerance = 1e-9;

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

void check_normalized(double total, const std::string& what) {
  if (std::abs(total - 1.0) > kNormTolerance) {
    throw std::invalid_argument(what + " probabilities sum to " + format_prob(total) + ", not 1");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Lexicon files

std::vector<LexiconEntry> parse_lexicon(std::istream& in) {
  std::vector<LexiconEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw std::invalid_argument("lexicon line " + std::to_string(lineno) + ": expected 4 fields");
    }
    LexiconEntry e;
    e.english = fields[0];
    e.pivot = fields[1];
    e.forward_prob = std::stod(fields[2]);
    for (const auto& item : split(fields[3], ',')) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos) {
        throw std::invalid_argument("lexicon line " + std::to_string(lineno) +
                                    ": malformed reverse entry '" + item + "'");
      }
      e.reverse.emplace_back(item.substr(0, colon), std::stod(item.substr(colon + 1)));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_lexicon(std::ostream& out, const std::vector<LexiconEntry>& entries) {
  for (const auto& e : entries) {
    out << e.english << '\t' << e.pivot << '\t' << format_prob(e.forward_prob) << '\t';
    for (std::size_t i = 0; i < e.reverse.size(); ++i) {
      if (i) out << ',';
      out << e.reverse[i].first << ':' << format_prob(e.reverse[i].second);
    }
    out << '\n';
  }
}

std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon " + path.string());
  return parse_lexicon(in);
}

void save_lexicon(const std::filesystem::path& path, const std::vector<LexiconEntry>& entries) {
  std::ostringstream out;
  write_lexicon(out, entries);
  write_file_atomic(path, out.str());
}

std::shared_ptr<const Vocabulary> make_target_vocab(
    const std::vector<std::vector<LexiconEntry>>& lexicons) {
  std::set<std::string> words;
  for (const auto& lex : lexicons) {
    for (const auto& e : lex) {
      for (const auto& [w, p] : e.reverse) words.insert(w);
    }
  }
  std::vector<std::string> list{kEndOfSentence};
  list.insert(list.end(), words.begin(), words.end());
  return std::make_shared<const Vocabulary>(std::move(list));
}

// ---------------------------------------------------------------------------
// ToyPivotLanguage

ToyPivotLanguage::ToyPivotLanguage(std::string name, const std::vector<LexiconEntry>& entries,
                                   std::shared_ptr<const Vocabulary> target)
    : name_(std::move(name)), target_(std::move(target)) {
  for (const auto& e : entries) {
    if (!(e.forward_prob > 0.0)) {
      throw std::invalid_argument(name_ + ": forward probability of " + e.english + " -> " +
                                  e.pivot + " must be positive");
    }
    forward_[e.english].emplace_back(e.pivot, e.forward_prob);
    std::vector<std::pair<std::size_t, double>> rev;
    double total = 0.0;
    for (const auto& [w, p] : e.reverse) {
      if (p < 0.0) throw std::invalid_argument(name_ + ": negative reverse probability for " + w);
      rev.emplace_back(target_->id(w), p);
      total += p;
    }
    check_normalized(total, name_ + " reverse translation of '" + e.pivot + "'");
    auto [it, inserted] = reverse_.emplace(e.pivot, rev);
    if (!inserted && it->second != rev) {
      throw std::invalid_argument(name_ + ": pivot word '" + e.pivot +
                                  "' has inconsistent reverse translations");
    }
  }
  for (const auto& [word, options] : forward_) {
    double total = 0.0;
    for (const auto& [pivot, p] : options) total += p;
    check_normalized(total, name_ + " forward translation of '" + word + "'");
  }
}

const std::vector<std::pair<std::string, double>>& ToyPivotLanguage::forward_options(
    const std::string& english) const {
  auto it = forward_.find(english);
  if (it == forward_.end()) {
    throw std::out_of_range(name_ + ": no translation for '" + english + "'");
  }
  return it->second;
}

const std::vector<std::pair<std::size_t, double>>& ToyPivotLanguage::reverse_options(
    const std::string& pivot) const {
  auto it = reverse_.find(pivot);
  if (it == reverse_.end()) throw std::out_of_range(name_ + ": unknown pivot word '" + pivot + "'");
  return it->second;
}

std::vector<PivotTranslation> ToyPivotLanguage::kbest(const Sentence& source, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("kbest needs k >= 1");
  if (source.empty()) throw std::invalid_argument("cannot translate an empty sentence");
  // Keeping the k best prefixes per position is exact for a product of
  // independent per-word factors.
  auto better = [](const PivotTranslation& a, const PivotTranslation& b) {
    return a.prob != b.prob ? a.prob > b.prob : a.tokens < b.tokens;
  };
  std::vector<PivotTranslation> beam{{{}, 1.0}};
  for (const auto& word : source) {
    const auto& options = forward_options(word);
    std::vector<PivotTranslation> next;
    next.reserve(beam.size() * options.size());
    for (const auto& partial : beam) {
      for (const auto& [pivot, p] : options) {
        PivotTranslation t = partial;
        t.tokens.push_back(pivot);
        t.prob *= p;
        next.push_back(std::move(t));
      }
    }
    std::sort(next.begin(), next.end(), better);
    if (next.size() > k) next.resize(k);
    beam = std::move(next);
  }
  return beam;
}

std::vector<double> ToyPivotLanguage::next_word_dist(const Sentence& pivot,
                                                     const Sentence& prefix) const {
  std::vector<double> dist(target_->size(), 0.0);
  const std::size_t t = prefix.size();
  if (t >= pivot.size()) {
    dist[0] = 1.0;
    return dist;
  }
  for (const auto& [id, p] : reverse_options(pivot[t])) dist[id] += p;
  return dist;
}

// ---------------------------------------------------------------------------
// Toy lexicon construction

namespace {

std::string make_pivot_word(const std::vector<std::string>& syllables, Rng& rng,
                            std::set<std::string>& used) {
  std::uniform_int_distribution<std::size_t> pick(0, syllables.size() - 1);
  std::uniform_int_distribution<int> length(2, 3);
  for (;;) {
    std::string w;
    const int n = length(rng);
    for (int i = 0; i < n; ++i) w += syllables[pick(rng)];
    if (used.insert(w).second) return w;
  }
}

}  // namespace

std::pair<std::vector<LexiconEntry>, std::vector<LexiconEntry>> build_toy_lexicons(
    const ToyLexiconSpec& spec) {
  // Consonant-initial syllables for one language, vowel-initial for the other,
  // so the word forms never collide.
  const std::vector<std::vector<std::string>> syllables = {
      {"ka", "lo", "mi", "ne", "ru", "sa", "te", "vi", "po", "du"},
      {"ao", "eu", "ix", "oq", "uy", "az", "ef", "ot", "ib", "um"},
  };

  // Synonym group of each word: its canonical form plus every alternate.
  std::map<std::string, std::vector<std::string>> group;
  auto add_group = [&](const std::string& canon) {
    std::vector<std::string> members{canon};
    if (auto it = spec.synonyms.find(canon); it != spec.synonyms.end()) {
      members.insert(members.end(), it->second.begin(), it->second.end());
    }
    if (auto it = spec.foreign_synonyms.find(canon); it != spec.foreign_synonyms.end()) {
      members.insert(members.end(), it->second.begin(), it->second.end());
    }
    for (const auto& m : members) group.emplace(m, members);
  };
  for (const auto& [canon, alts] : spec.synonyms) add_group(canon);
  for (const auto& [canon, alts] : spec.foreign_synonyms) {
    if (!group.count(canon)) add_group(canon);
  }

  std::vector<std::string> words = spec.words;
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());

  std::array<std::vector<LexiconEntry>, 2> out;
  for (std::size_t lang = 0; lang < 2; ++lang) {
    Rng rng = make_rng(spec.seed, "lexicon", lang);
    std::set<std::string> used;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& word : words) {
      std::vector<std::string> others;
      if (auto it = group.find(word); it != group.end()) {
        for (const auto& m : it->second) {
          if (m != word) others.push_back(m);
        }
      }
      const std::size_t forms = unit(rng) < 0.5 ? 1 : 2;
      std::vector<double> forward(forms, 1.0);
      if (forms == 2) {
        forward[0] = 0.55 + 0.3 * unit(rng);
        forward[1] = 1.0 - forward[0];
      }
      for (std::size_t f = 0; f < forms; ++f) {
        LexiconEntry e;
        e.english = word;
        e.pivot = make_pivot_word(syllables[lang], rng, used);
        e.forward_prob = forward[f];
        if (others.empty()) {
          e.reverse = {{word, 1.0}};
        } else {
          std::vector<std::string> pool = others;
          std::shuffle(pool.begin(), pool.end(), rng);
          const std::size_t max_alts = std::min<std::size_t>(2, pool.size());
          std::uniform_int_distribution<std::size_t> count(1, max_alts);
          pool.resize(count(rng));
          const double self = 0.45 + 0.35 * unit(rng);
          std::vector<double> weights;
          for (std::size_t i = 0; i < pool.size(); ++i) weights.push_back(0.2 + unit(rng));
          const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
          e.reverse.emplace_back(word, self);
          double assigned = self;
          for (std::size_t i = 0; i < pool.size(); ++i) {
            const double p = i + 1 == pool.size() ? 1.0 - assigned
                                                   : (1.0 - self) * weights[i] / wsum;
            e.reverse.emplace_back(pool[i], p);
            assigned += p;
          }
        }
        out[lang].push_back(std::move(e));
      }
    }
  }
  return {std::move(out[0]), std::move(out[1])};
}

// ---------------------------------------------------------------------------
// Distributions

std::vector<double> pivot_next_word(const TranslationModel& model,
                                    const std::vector<PivotTranslation>& kbest,
                                    const Sentence& prefix) {
  if (kbest.empty()) throw std::invalid_argument("pivot mixture needs at least one translation");
  double total = 0.0;
  for (const auto& t : kbest) total += t.prob;
  if (!(total > 0.0)) throw std::invalid_argument("pivot translations carry no probability mass");
  std::vector<double> mix(model.target_vocab().size(), 0.0);
  for (const auto& t : kbest) {
    const double w = t.prob / total;
    const auto dist = model.next_word_dist(t.tokens, prefix);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += w * dist[i];
  }
  return mix;
}

std::vector<double> multilingual_next_word(const std::vector<double>& first,
                                           const std::vector<double>& second) {
  if (first.size() != second.size()) {
    throw std::invalid_argument("vocabulary mismatch: distributions over " +
                                std::to_string(first.size()) + " and " +
                                std::to_string(second.size()) + " words");
  }
  std::vector<double> out(first.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (first[i] + second[i]);
  return out;
}

std::size_t edit_distance(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// ---------------------------------------------------------------------------
// Paraphraser

void ParaphraseSettings::validate() const {
  if (pivots < 1) throw std::invalid_argument("paraphrase.pivots must be >= 1");
  if (beam_width < 1) throw std::invalid_argument("paraphrase.beam_width must be >= 1");
  if (max_candidates < 1) throw std::invalid_argument("paraphrase.max_candidates must be >= 1");
  if (top_k < 1) throw std::invalid_argument("paraphrase.top_k must be >= 1");
}

Paraphraser::Paraphraser(const TranslationModel& first, const TranslationModel& second,
                         std::unordered_set<std::string> known_words, ParaphraseSettings settings)
    : first_(first), second_(second), known_(std::move(known_words)), settings_(settings) {
  settings_.validate();
  if (first_.target_vocab().words() != second_.target_vocab().words()) {
    throw std::invalid_argument("pivot languages must share one target vocabulary");
  }
}

Paraphraser::Pivots Paraphraser::pivots_for(const Sentence& source) const {
  return {first_.kbest(source, settings_.pivots), second_.kbest(source, settings_.pivots)};
}

std::vector<double> Paraphraser::next_word(const Pivots& pivots, const Sentence& prefix) const {
  return multilingual_next_word(pivot_next_word(first_, pivots.first, prefix),
                                pivot_next_word(second_, pivots.second, prefix));
}

std::vector<double> Paraphraser::next_word(const Sentence& source, const Sentence& prefix) const {
  return next_word(pivots_for(source), prefix);
}

double Paraphraser::sentence_prob(const Pivots& pivots, const Sentence& candidate) const {
  if (candidate.empty()) throw std::invalid_argument("paraphrase candidate is empty");
  const auto& vocab = target_vocab();
  double prob = 1.0;
  Sentence prefix;
  prefix.reserve(candidate.size());
  for (std::size_t t = 0; t <= candidate.size(); ++t) {
    const auto dist = next_word(pivots, prefix);
    std::size_t id = 0;
    if (t < candidate.size()) {
      const auto found = vocab.find(candidate[t]);
      if (!found || *found == 0) return 0.0;
      id = *found;
    }
    if (dist[id] == 0.0) return 0.0;
    prob *= dist[id];
    if (t < candidate.size()) prefix.push_back(candidate[t]);
  }
  return prob;
}

double Paraphraser::sentence_prob(const Sentence& source, const Sentence& candidate) const {
  return sentence_prob(pivots_for(source), candidate);
}

std::vector<ParaphraseCandidate> Paraphraser::decode_candidates(const Sentence& source) const {
  const auto pivots = pivots_for(source);
  const auto& vocab = target_vocab();
  const std::size_t max_len = source.size() + settings_.edit_threshold;

  struct Hyp {
    Sentence tokens;
    double logp = 0.0;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    return a.logp != b.logp ? a.logp > b.logp : a.tokens < b.tokens;
  };

  std::vector<Hyp> active{Hyp{}};
  std::vector<Hyp> finished;
  while (!active.empty()) {
    std::vector<Hyp> expansions;
    for (const auto& h : active) {
      const auto dist = next_word(pivots, h.tokens);
      if (dist[0] > 0.0 && !h.tokens.empty() && h.tokens != source) {
        finished.push_back({h.tokens, h.logp + std::log(dist[0])});
      }
      if (h.tokens.size() >= max_len) continue;
      for (std::size_t w = 1; w < dist.size(); ++w) {
        if (dist[w] <= 0.0) continue;
        Hyp next{h.tokens, h.logp + std::log(dist[w])};
        next.tokens.push_back(vocab.word(w));
        // A hypothesis that can only end as the source itself is dead.
        if (next.tokens == source && next_word(pivots, next.tokens)[0] == 1.0) continue;
        expansions.push_back(std::move(next));
      }
    }
    std::sort(expansions.begin(), expansions.end(), better);
    if (expansions.size() > settings_.beam_width) expansions.resize(settings_.beam_width);
    active = std::move(expansions);
  }

  std::sort(finished.begin(), finished.end(), better);
  std::vector<ParaphraseCandidate> out;
  for (auto& h : finished) {
    if (out.size() == settings_.max_candidates) break;
    ParaphraseCandidate c;
    c.sentence_prob = sentence_prob(pivots, h.tokens);
    c.tokens = std::move(h.tokens);
    c.edit_distance = edit_distance(source, c.tokens);
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.sentence_prob != b.sentence_prob ? a.sentence_prob > b.sentence_prob
                                              : a.tokens < b.tokens;
  });
  return out;
}

ParaphraseCandidate Paraphraser::score(const Sentence& question, const Sentence& candidate) const {
  const auto pivots = pivots_for(question);
  const double self = sentence_prob(pivots, question);
  if (!(self > 0.0)) {
    throw std::domain_error("P(q|q) is zero for '" + join_words(question) +
                            "': the question cannot be recovered under the lexicons");
  }
  ParaphraseCandidate c;
  c.tokens = candidate;
  c.sentence_prob = candidate == question ? self : sentence_prob(pivots, candidate);
  c.raw_score = std::min(1.0, c.sentence_prob / self);
  c.edit_distance = edit_distance(question, candidate);
  const bool unknown = std::any_of(candidate.begin(), candidate.end(),
                                   [&](const std::string& w) { return !known_.count(w); });
  c.penalized = c.edit_distance > settings_.edit_threshold || unknown;
  c.score = c.raw_score + (c.penalized ? settings_.penalty : 0.0);
  return c;
}

void Paraphraser::rank(std::vector<ParaphraseCandidate>& candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.sentence_prob != b.sentence_prob) return a.sentence_prob > b.sentence_prob;
    return a.tokens < b.tokens;
  });
}

std::vector<ParaphraseCandidate> Paraphraser::qadvgen(const Sentence& question) const {
  return qadvgen(question, settings_.top_k);
}

std::vector<ParaphraseCandidate> Paraphraser::qadvgen(const Sentence& question,
                                                      std::size_t k) const {
  if (k < 1) throw std::invalid_argument("qadvgen needs k >= 1");
  auto candidates = decode_candidates(question);
  for (auto& c : candidates) c = score(question, c.tokens);
  rank(candidates);
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

// ---------------------------------------------------------------------------
// Cache files

std::string serialize_paraphrase_cache(const ParaphraseCache& cache) {
  std::string out;
  for (const auto& [id, candidates] : cache) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : candidates) {
      list.push_back({{"tokens", join_words(c.tokens)},
                      {"sentence_prob", c.sentence_prob},
                      {"raw_score", c.raw_score},
                      {"score", c.score},
                      {"edit_distance", c.edit_distance},
                      {"low_confidence", c.penalized}});
    }
    out += nlohmann::json{{"id", id}, {"candidates", list}}.dump();
    out += '\n';
  }
  return out;
}

void save_paraphrase_cache(const std::filesystem::path& path, const ParaphraseCache& cache) {
  write_file_atomic(path, serialize_paraphrase_cache(cache));
}

ParaphraseCache load_paraphrase_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open paraphrase cache " + path.string());
  ParaphraseCache cache;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    auto& list = cache[j.at("id").get<std::size_t>()];
    for (const auto& c : j.at("candidates")) {
      ParaphraseCandidate pc;
      pc.tokens = split_words(c.at("tokens").get<std::string>());
      pc.sentence_prob = c.at("sentence_prob");
      pc.raw_score = c.at("raw_score");
      pc.score = c.at("score");
      pc.edit_distance = c.at("edit_distance");
      pc.penalized = c.at("low_confidence");
      list.push_back(std::move(pc));
    }
  }
  return cache;
}

}  // namespace vqaug
