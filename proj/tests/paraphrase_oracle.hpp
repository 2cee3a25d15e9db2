#pragma once

// Exhaustive reference for the paraphrase scores, computed straight from the
// lexicon entries by enumerating every pivot path and every target sequence.

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vqaug/paraphrase.hpp"

namespace vqaug::test {

class PathOracle {
 public:
  PathOracle(const std::vector<LexiconEntry>& first, const std::vector<LexiconEntry>& second,
             std::size_t k)
      : k_(k) {
    for (const auto* lex : {&first, &second}) {
      Tables t;
      for (const auto& e : *lex) {
        t.forward[e.english].push_back({e.pivot, e.forward_prob});
        for (const auto& [w, p] : e.reverse) t.reverse[e.pivot][w] += p;
      }
      langs_.push_back(std::move(t));
    }
  }

  /// Every pivot sentence of one language with its probability, best first.
  std::vector<std::pair<Sentence, double>> pivot_paths(std::size_t lang, const Sentence& src) const {
    std::vector<std::pair<Sentence, double>> paths{{{}, 1.0}};
    for (const auto& word : src) {
      std::vector<std::pair<Sentence, double>> next;
      for (const auto& [tokens, p] : paths) {
        for (const auto& [pivot, q] : langs_[lang].forward.at(word)) {
          auto t = tokens;
          t.push_back(pivot);
          next.push_back({t, p * q});
        }
      }
      paths = std::move(next);
    }
    std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return paths;
  }

  /// Averaged probability of target word y at position t (y empty means end
  /// of sentence), mixing the k best pivot paths of each language.
  double step(const Sentence& src, std::size_t t, const std::string& y) const {
    double avg = 0.0;
    for (std::size_t lang = 0; lang < 2; ++lang) {
      auto paths = pivot_paths(lang, src);
      if (paths.size() > k_) paths.resize(k_);
      double total = 0.0;
      for (const auto& p : paths) total += p.second;
      double mix = 0.0;
      for (const auto& [pivot, p] : paths) {
        double q = 0.0;
        if (t >= pivot.size()) {
          q = y.empty() ? 1.0 : 0.0;
        } else if (!y.empty()) {
          const auto& rev = langs_[lang].reverse.at(pivot[t]);
          auto it = rev.find(y);
          q = it == rev.end() ? 0.0 : it->second;
        }
        mix += p / total * q;
      }
      avg += 0.5 * mix;
    }
    return avg;
  }

  double sentence_prob(const Sentence& src, const Sentence& cand) const {
    double prob = 1.0;
    for (std::size_t t = 0; t <= cand.size(); ++t) {
      prob *= step(src, t, t < cand.size() ? cand[t] : std::string());
    }
    return prob;
  }

  double raw_score(const Sentence& q, const Sentence& cand) const {
    return std::min(1.0, sentence_prob(q, cand) / sentence_prob(q, q));
  }

  /// Every same-length target sequence with positive probability, excluding
  /// the source, ranked by probability then tokens.
  std::vector<std::pair<Sentence, double>> all_candidates(const Sentence& src) const {
    std::vector<std::vector<std::string>> options(src.size());
    for (std::size_t t = 0; t < src.size(); ++t) {
      for (std::size_t lang = 0; lang < 2; ++lang) {
        for (const auto& [pivot, p] : langs_[lang].forward.at(src[t])) {
          for (const auto& [w, q] : langs_[lang].reverse.at(pivot)) options[t].push_back(w);
        }
      }
      std::sort(options[t].begin(), options[t].end());
      options[t].erase(std::unique(options[t].begin(), options[t].end()), options[t].end());
    }
    std::vector<Sentence> seqs{{}};
    for (const auto& opts : options) {
      std::vector<Sentence> next;
      for (const auto& s : seqs) {
        for (const auto& w : opts) {
          auto n = s;
          n.push_back(w);
          next.push_back(std::move(n));
        }
      }
      seqs = std::move(next);
    }
    std::vector<std::pair<Sentence, double>> out;
    for (const auto& s : seqs) {
      if (s == src) continue;
      const double p = sentence_prob(src, s);
      if (p > 0.0) out.push_back({s, p});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
  }

 private:
  struct Tables {
    std::map<std::string, std::vector<std::pair<std::string, double>>> forward;
    std::map<std::string, std::map<std::string, double>> reverse;
  };
  std::vector<Tables> langs_;
  std::size_t k_;
};

/// A small hand-written lexicon pair: three source words, each with at most
/// three reverse synonyms.
inline std::pair<std::vector<LexiconEntry>, std::vector<LexiconEntry>> tiny_lexicons() {
  std::vector<LexiconEntry> a = {
      {"what", "ka", 1.0, {{"what", 0.7}, {"which", 0.3}}},
      {"color", "lo", 0.6, {{"color", 0.5}, {"colour", 0.3}, {"hue", 0.2}}},
      {"color", "mi", 0.4, {{"colour", 0.6}, {"color", 0.4}}},
      {"cube", "ne", 1.0, {{"cube", 0.8}, {"block", 0.2}}},
      {"is", "ru", 1.0, {{"is", 1.0}}},
  };
  std::vector<LexiconEntry> b = {
      {"what", "ao", 0.75, {{"what", 0.6}, {"which", 0.4}}},
      {"what", "eu", 0.25, {{"which", 1.0}}},
      {"color", "ix", 1.0, {{"color", 0.55}, {"hue", 0.45}}},
      {"cube", "oq", 0.5, {{"block", 0.5}, {"cube", 0.5}}},
      {"cube", "uy", 0.5, {{"cube", 1.0}}},
      {"is", "az", 1.0, {{"is", 1.0}}},
  };
  return {a, b};
}

}  // namespace vqaug::test
