#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "docent/text/corpus.hpp"
#include "docent/text/tokenizer.hpp"

namespace docent {

struct PreprocessOptions {
  std::size_t min_review_words = 5;
  std::size_t min_reviews_per_entity = 5;
  /// Encoder sequence limit; sentences keep at most max_seq_len - reserved words.
  std::size_t max_seq_len = 64;
  /// [CLS], entity token, and two [SEP] markers in the widest input layout.
  std::size_t reserved_positions = 4;
};

/// Splits on '.', '!' and '?'. Abbreviations are not special-cased.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (const char c : text) {
    if (c == '.' || c == '!' || c == '?') {
      out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.push_back(std::move(current));
  return out;
}

namespace detail {

/// Replaces every occurrence of `name` (as a word sequence) with UNK literals.
inline void scrub_name(std::vector<std::vector<std::string>>& sentences,
                       const std::vector<std::string>& name) {
  if (name.empty()) return;
  std::vector<std::pair<std::size_t, std::size_t>> where;
  for (std::size_t s = 0; s < sentences.size(); ++s)
    for (std::size_t w = 0; w < sentences[s].size(); ++w) where.emplace_back(s, w);
  const std::string& unk = Vocabulary::special_names()[Vocabulary::kUnk];
  auto at = [&](std::size_t i) -> std::string& {
    return sentences[where[i].first][where[i].second];
  };
  for (std::size_t i = 0; i + name.size() <= where.size();) {
    bool match = true;
    for (std::size_t k = 0; k < name.size() && match; ++k) match = at(i + k) == name[k];
    if (match) {
      for (std::size_t k = 0; k < name.size(); ++k) at(i + k) = unk;
      i += name.size();
    } else {
      ++i;
    }
  }
}

}  // namespace detail

/// Dedup (exact text per entity) -> drop short reviews -> drop entities with
/// too few surviving reviews -> scrub the entity's own name -> split into
/// sentences -> truncate. Output is sorted by entity id, then review order.
inline std::vector<SentenceText> preprocess(const std::vector<RawReview>& reviews,
                                            const PreprocessOptions& options = {}) {
  struct EntityReviews {
    std::string name;
    std::vector<std::string> texts;
    std::set<std::string> seen;
  };
  std::map<std::string, EntityReviews> grouped;
  for (const auto& r : reviews) {
    auto& g = grouped[r.entity_id];
    if (g.name.empty()) g.name = r.entity_name;
    if (!g.seen.insert(r.text).second) continue;
    if (split_words(r.text).size() < options.min_review_words) continue;
    g.texts.push_back(r.text);
  }

  const std::size_t cap = options.max_seq_len > options.reserved_positions
                              ? options.max_seq_len - options.reserved_positions
                              : 1;
  std::vector<SentenceText> out;
  for (const auto& [entity_id, g] : grouped) {
    if (g.texts.size() < options.min_reviews_per_entity) continue;
    const auto name_words = split_words(g.name);
    for (std::size_t ri = 0; ri < g.texts.size(); ++ri) {
      std::vector<std::vector<std::string>> sentences;
      for (const auto& raw : split_sentences(g.texts[ri])) {
        auto words = split_words(raw);
        if (!words.empty()) sentences.push_back(std::move(words));
      }
      detail::scrub_name(sentences, name_words);
      for (auto& words : sentences) {
        if (words.size() > cap) words.resize(cap);
        out.push_back({entity_id, std::move(words), ri});
      }
    }
  }
  return out;
}

/// Joins each review's sentences back into text ("w w w. w w.") so the
/// output can be fed through preprocess again.
inline std::vector<RawReview> render_reviews(const std::vector<SentenceText>& sentences,
                                             const std::map<std::string, std::string>& names = {}) {
  std::vector<RawReview> out;
  for (std::size_t i = 0; i < sentences.size();) {
    const auto& head = sentences[i];
    RawReview r;
    r.entity_id = head.entity_id;
    if (auto it = names.find(head.entity_id); it != names.end()) r.entity_name = it->second;
    std::size_t j = i;
    for (; j < sentences.size() && sentences[j].entity_id == head.entity_id &&
           sentences[j].review == head.review;
         ++j) {
      if (j > i) r.text += ' ';
      for (std::size_t w = 0; w < sentences[j].words.size(); ++w) {
        if (w) r.text += ' ';
        r.text += sentences[j].words[w];
      }
      r.text += '.';
    }
    out.push_back(std::move(r));
    i = j;
  }
  return out;
}

}  // namespace docent
