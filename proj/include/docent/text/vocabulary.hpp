#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace docent {

enum class TokenKind { special, word, entity };

inline const char* to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::special: return "special";
    case TokenKind::word: return "word";
    case TokenKind::entity: return "entity";
  }
  return "?";
}

/// Word table with fixed specials at ids 0..4 and an optional block of
/// entity tokens allocated after every word token.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr int kUnk = 4;
  static constexpr int kSpecialCount = 5;

  static const std::array<std::string, kSpecialCount>& special_names() {
    static const std::array<std::string, kSpecialCount> names{
        "[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"};
    return names;
  }

  static std::string entity_token_string(std::string_view entity_id) {
    return "[ENT:" + std::string(entity_id) + "]";
  }

  Vocabulary() {
    for (const auto& name : special_names()) {
      index_.emplace(name, static_cast<int>(tokens_.size()));
      tokens_.push_back(name);
    }
  }

  int add_word(const std::string& word) {
    if (!entity_ids_.empty()) {
      throw std::logic_error("cannot add words after the entity block is allocated");
    }
    if (word.empty()) throw std::invalid_argument("empty word");
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    index_.emplace(word, id);
    tokens_.push_back(word);
    return id;
  }

  /// Appends one token per entity id. Throws on duplicates.
  void add_entities(const std::vector<std::string>& entity_ids) {
    for (const auto& e : entity_ids) {
      if (e.empty()) throw std::invalid_argument("empty entity id");
      if (entity_index_.count(e)) throw std::invalid_argument("duplicate entity id '" + e + "'");
      const std::string tok = entity_token_string(e);
      if (index_.count(tok)) throw std::invalid_argument("duplicate entity id '" + e + "'");
      if (entity_ids_.empty()) entity_base_ = static_cast<int>(tokens_.size());
      entity_index_.emplace(e, entity_ids_.size());
      entity_ids_.push_back(e);
      index_.emplace(tok, static_cast<int>(tokens_.size()));
      tokens_.push_back(tok);
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  /// Specials plus words: every id below this is not an entity token.
  std::size_t word_block_size() const noexcept {
    return entity_ids_.empty() ? tokens_.size() : static_cast<std::size_t>(entity_base_);
  }
  std::size_t entity_count() const noexcept { return entity_ids_.size(); }
  int entity_base() const noexcept {
    return entity_ids_.empty() ? static_cast<int>(tokens_.size()) : entity_base_;
  }

  std::optional<int> lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Word (or special literal) id, UNK when absent. Never yields entity tokens.
  int word_id(std::string_view word) const {
    auto id = lookup(word);
    if (!id || is_entity(*id)) return kUnk;
    return *id;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  TokenKind kind(int id) const {
    token(id);
    if (id < kSpecialCount) return TokenKind::special;
    if (is_entity(id)) return TokenKind::entity;
    return TokenKind::word;
  }

  bool is_special(int id) const noexcept { return id >= 0 && id < kSpecialCount; }
  bool is_entity(int id) const noexcept {
    return !entity_ids_.empty() && id >= entity_base_ &&
           static_cast<std::size_t>(id) < tokens_.size();
  }
  bool is_word(int id) const noexcept {
    return id >= kSpecialCount && static_cast<std::size_t>(id) < word_block_size();
  }

  int entity_token(std::string_view entity_id) const {
    return entity_base_ + static_cast<int>(entity_index(entity_id));
  }

  std::size_t entity_index(std::string_view entity_id) const {
    auto it = entity_index_.find(std::string(entity_id));
    if (it == entity_index_.end()) {
      throw std::out_of_range("unknown entity id '" + std::string(entity_id) + "'");
    }
    return it->second;
  }

  bool has_entity(std::string_view entity_id) const {
    return entity_index_.count(std::string(entity_id)) != 0;
  }

  const std::string& entity_id(std::size_t index) const { return entity_ids_.at(index); }
  const std::vector<std::string>& entity_ids() const noexcept { return entity_ids_; }

  /// Entity id carried by an entity token.
  const std::string& entity_of_token(int id) const {
    if (!is_entity(id)) throw std::out_of_range("token " + std::to_string(id) + " is not an entity token");
    return entity_ids_[static_cast<std::size_t>(id - entity_base_)];
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.entity_ids_ == b.entity_ids_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> entity_ids_;
  std::unordered_map<std::string, std::size_t> entity_index_;
  int entity_base_ = 0;
};

/// Words with frequency >= min_freq, ordered by frequency desc then lexically.
/// Special literals in the input are not counted as words.
template <class Sentences>
Vocabulary build_vocab(const Sentences& sentences, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  const auto& specials = Vocabulary::special_names();
  for (const auto& sentence : sentences) {
    for (const auto& w : sentence) {
      if (std::find(specials.begin(), specials.end(), w) != specials.end()) continue;
      ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  const std::size_t floor = std::max<std::size_t>(min_freq, 1);
  for (const auto& [word, n] : ordered) {
    if (n >= floor) vocab.add_word(word);
  }
  return vocab;
}

/// Copy of `vocab` with one fresh token per entity; word ids unchanged.
inline Vocabulary extend_with_entities(Vocabulary vocab,
                                       const std::vector<std::string>& entity_ids) {
  vocab.add_entities(entity_ids);
  return vocab;
}

}  // namespace docent
