#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "docent/numerics/errors.hpp"
#include "docent/text/tokenizer.hpp"
#include "docent/text/vocabulary.hpp"

namespace docent {

/// One review as it arrives from the outside world.
struct RawReview {
  std::string entity_id;
  std::string entity_name;
  std::string text;
};

/// A sentence as words, before id assignment.
struct SentenceText {
  std::string entity_id;
  std::vector<std::string> words;
  std::size_t review = 0;  // index of the source review within its entity
};

/// (entity, sentence) pair in id space. Token ids never include entity tokens.
struct CorpusExample {
  std::string entity_id;
  std::vector<int> tokens;

  friend bool operator==(const CorpusExample&, const CorpusExample&) = default;
};

inline std::vector<CorpusExample> encode_corpus(const std::vector<SentenceText>& sentences,
                                                const Vocabulary& vocab) {
  std::vector<CorpusExample> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    if (s.words.empty()) throw DataError("empty sentence for entity '" + s.entity_id + "'");
    out.push_back({s.entity_id, tokenize_words(s.words, vocab)});
  }
  return out;
}

/// Unique entity ids in first-appearance order.
template <class Examples>
std::vector<std::string> entity_ids_of(const Examples& examples) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, bool> seen;
  for (const auto& ex : examples) {
    if (seen.emplace(ex.entity_id, true).second) ids.push_back(ex.entity_id);
  }
  return ids;
}

}  // namespace docent
