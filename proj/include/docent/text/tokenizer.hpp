#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "docent/text/vocabulary.hpp"

namespace docent {

namespace detail {

inline bool is_special_literal(std::string_view piece) {
  const auto& names = Vocabulary::special_names();
  return std::find(names.begin(), names.end(), piece) != names.end();
}

}  // namespace detail

/// Lowercases, turns ASCII punctuation into separators (apostrophes are
/// dropped so "don't" stays one word) and splits on whitespace. Special
/// literals such as "[UNK]" pass through untouched.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view piece = text.substr(i, j - i);
    i = j;
    if (detail::is_special_literal(piece)) {
      words.emplace_back(piece);
      continue;
    }
    std::string current;
    for (const char raw : piece) {
      const auto c = static_cast<unsigned char>(raw);
      if (c == '\'') continue;
      if (c < 128 && std::ispunct(c)) {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
        continue;
      }
      current.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
    }
    if (!current.empty()) words.push_back(std::move(current));
  }
  return words;
}

inline std::vector<int> tokenize_words(const std::vector<std::string>& words,
                                       const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.word_id(w));
  return ids;
}

/// Text to word ids; out-of-vocabulary words become UNK.
inline std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  return tokenize_words(split_words(text), vocab);
}

inline std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace docent
