#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "docent/encoder/config.hpp"
#include "docent/encoder/model.hpp"
#include "docent/numerics/adam.hpp"
#include "docent/rng.hpp"
#include "docent/text/corpus.hpp"
#include "docent/text/vocabulary.hpp"

namespace docent {

struct TrainingConfig {
  std::size_t batch_size = 32;
  double word_mask_rate = 0.15;
  double entity_mask_rate = 0.5;  // full variant only
  double lambda = 1.0;
  double tau = 4.0;
  std::size_t steps = 2000;
  std::size_t warmup_steps = 0;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::uint64_t seed = 7;
  AdamConfig adam;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    auto rate = [](double r, const char* what) {
      if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
    };
    rate(word_mask_rate, "word_mask_rate");
    rate(entity_mask_rate, "entity_mask_rate");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  }
};

struct MaskResult {
  std::vector<int> tokens;
  std::vector<std::size_t> positions;
  std::vector<int> labels;
};

/// Masks each eligible position independently with probability `rate`.
/// Only word ids in [kSpecialCount, word_limit) are eligible, so specials
/// and entity tokens are never touched here.
inline MaskResult mask_tokens(const std::vector<int>& tokens, double rate, Rng& rng,
                              std::size_t word_limit) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("mask rate must lie in [0, 1]");
  MaskResult out{tokens, {}, {}};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (t < Vocabulary::kSpecialCount || static_cast<std::size_t>(t) >= word_limit) continue;
    if (rate == 0.0 || !rng.bernoulli(rate)) continue;
    out.tokens[i] = Vocabulary::kMask;
    out.positions.push_back(i);
    out.labels.push_back(t);
  }
  return out;
}

/// Model-ready rows: masked inputs, word mask positions/labels per row, the
/// row's entity index and (full variant) whether its entity token is masked.
struct MaskedBatch {
  std::vector<Sequence> inputs;
  std::vector<std::vector<std::size_t>> positions;
  std::vector<std::vector<int>> labels;
  std::vector<std::size_t> entities;
  std::vector<bool> entity_masked;

  std::size_t size() const { return inputs.size(); }
  std::size_t masked_words() const {
    std::size_t n = 0;
    for (const auto& p : positions) n += p.size();
    return n;
  }
};

/// Builds a batch for `variant` from corpus rows. Dual rows are left unmasked;
/// hybrid rows get word masking; full rows use the entity-text layout with
/// word masking plus entity-token masking at `entity_mask_rate`.
inline MaskedBatch make_batch(Variant variant, const std::vector<const CorpusExample*>& rows,
                              const Vocabulary& vocab, const TrainingConfig& config, Rng& rng) {
  MaskedBatch b;
  const std::size_t word_limit = vocab.word_block_size();
  for (const CorpusExample* ex : rows) {
    const std::size_t e = vocab.entity_index(ex->entity_id);
    Sequence s = variant == Variant::full
                     ? entity_text_sequence(vocab.entity_token(ex->entity_id), ex->tokens)
                     : text_sequence(ex->tokens);
    const double rate = variant == Variant::dual ? 0.0 : config.word_mask_rate;
    MaskResult m = mask_tokens(s.tokens, rate, rng, word_limit);
    bool masked_entity = false;
    if (variant == Variant::full && config.entity_mask_rate > 0.0 &&
        rng.bernoulli(config.entity_mask_rate)) {
      m.tokens[kEntityPosition] = Vocabulary::kMask;
      masked_entity = true;
    }
    s.tokens = std::move(m.tokens);
    b.inputs.push_back(std::move(s));
    b.positions.push_back(std::move(m.positions));
    b.labels.push_back(std::move(m.labels));
    b.entities.push_back(e);
    b.entity_masked.push_back(masked_entity);
  }
  return b;
}

}  // namespace docent
