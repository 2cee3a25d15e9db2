#include "vqaug/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace vqaug {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary entry '" + words_[i] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto found = find(word);
  if (!found) throw std::out_of_range("word '" + word + "' not in vocabulary");
  return *found;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (auto i : ids) words.push_back(word(i));
  return words;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace vqaug
