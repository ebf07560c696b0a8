#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "docent/text/vocabulary.hpp"

namespace docent {

enum class Variant { dual, full, hybrid };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::dual: return "dual";
    case Variant::full: return "full";
    case Variant::hybrid: return "hybrid";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "dual") return Variant::dual;
  if (s == "full") return Variant::full;
  if (s == "hybrid") return Variant::hybrid;
  throw std::invalid_argument("unknown variant '" + s + "' (expected dual, full or hybrid)");
}

/// Encoder shape plus the variant-specific heads. For the full variant the
/// entity tokens occupy the last `entity_count` ids of the token vocabulary;
/// dual and hybrid keep a separate entity table.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 64;
  std::size_t ffn_hidden = 256;
  std::size_t max_seq_len = 64;
  std::size_t vocab_size = 0;
  std::size_t entity_count = 0;
  std::size_t entity_dim = 64;
  Variant variant = Variant::dual;
  double init_std = 0.02;

  void validate() const {
    if (heads == 0 || hidden == 0 || hidden % heads != 0) {
      throw std::invalid_argument("hidden (" + std::to_string(hidden) +
                                  ") must be a positive multiple of heads (" +
                                  std::to_string(heads) + ")");
    }
    if (ffn_hidden == 0 || max_seq_len < 2) {
      throw std::invalid_argument("ffn_hidden must be positive and max_seq_len >= 2");
    }
    if (vocab_size <= static_cast<std::size_t>(Vocabulary::kSpecialCount)) {
      throw std::invalid_argument("vocab_size must exceed the special-token block");
    }
    if (entity_count == 0) throw std::invalid_argument("entity_count must be positive");
    // Cosine between g(e) and f_CLS(s) needs matching widths in every variant.
    if (entity_dim != hidden) {
      throw std::invalid_argument("entity_dim must equal hidden");
    }
    if (variant == Variant::full &&
        vocab_size < entity_count + static_cast<std::size_t>(Vocabulary::kSpecialCount) + 1) {
      throw std::invalid_argument("full variant vocabulary must contain the entity block");
    }
    if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
  }

  /// First entity token id (full variant only).
  std::size_t entity_base() const { return vocab_size - entity_count; }

  /// Input vocabulary for the variant: full sees entity tokens, the others
  /// only ever read and predict words.
  static ModelConfig for_vocabulary(const Vocabulary& vocab, Variant variant,
                                    ModelConfig shape) {
    shape.variant = variant;
    shape.entity_count = vocab.entity_count();
    shape.vocab_size = variant == Variant::full ? vocab.size() : vocab.word_block_size();
    shape.entity_dim = shape.hidden;
    shape.validate();
    return shape;
  }

  static ModelConfig for_vocabulary(const Vocabulary& vocab, Variant variant) {
    return for_vocabulary(vocab, variant, ModelConfig{});
  }

  static ModelConfig desk() { return {}; }

  /// 12 x 12 x 768 BERT-base shape; not used in tests.
  static ModelConfig bert_base() {
    ModelConfig c;
    c.layers = 12;
    c.heads = 12;
    c.hidden = 768;
    c.ffn_hidden = 3072;
    c.max_seq_len = 512;
    c.entity_dim = 768;
    return c;
  }
};

}  // namespace docent
