#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "docent/encoder/model.hpp"
#include "docent/eval/metrics.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/numerics/functional.hpp"
#include "docent/text/tokenizer.hpp"
#include "docent/text/vocabulary.hpp"

namespace docent::eval {

/// Sentence vectors from a batched graph-free forward pass: the CLS row and
/// the mean of the word rows (CLS and SEP excluded) of [CLS] s [SEP].
template <class T>
struct TextEncodings {
  std::vector<std::vector<T>> cls;
  std::vector<std::vector<T>> mean;
};

template <class T>
TextEncodings<T> encode_texts(const Model<T>& m, const std::vector<std::vector<int>>& texts,
                              std::size_t batch = 64) {
  TextEncodings<T> out;
  const std::size_t h = m.config.hidden;
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    const std::size_t end = std::min(texts.size(), start + batch);
    std::vector<Sequence> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(text_sequence(texts[i]));
    ad::Tape<T> tape(false);
    const auto enc = encode_batch(tape, m.params, m.config, seqs);
    const auto& hs = enc.hidden.value();
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto span = enc.spans[i];
      auto c = hs.row(span.offset);
      out.cls.emplace_back(c.begin(), c.end());
      std::vector<T> mean(h, T{0});
      const std::size_t words = span.length - 2;
      for (std::size_t r = 1; r + 1 < span.length; ++r) {
        auto row = hs.row(span.offset + r);
        for (std::size_t d = 0; d < h; ++d) mean[d] += row[d];
      }
      if (words > 0) {
        for (auto& v : mean) v /= static_cast<T>(words);
      } else {
        mean.assign(c.begin(), c.end());
      }
      out.mean.push_back(std::move(mean));
    }
  }
  return out;
}

inline std::vector<int> query_tokens(const std::string& query, const Vocabulary& vocab) {
  auto ids = tokenize(query, vocab);
  if (ids.empty()) throw DataError("query '" + query + "' is empty after tokenization");
  return ids;
}

/// Ranks all entities for a query with a pre-trained model: cosine to g(e)
/// for dual/hybrid, the entity-token logits at the masked entity slot of
/// [CLS] [MASK] [SEP] q [SEP] for full.
template <class T>
class ZeroShotRanker {
 public:
  ZeroShotRanker(const Model<T>& model, const Vocabulary& vocab) : model_(model), vocab_(vocab) {
    if (vocab.entity_count() != model.config.entity_count) {
      throw DataError("vocabulary and model disagree on the entity count");
    }
    if (model.config.variant != Variant::full) {
      for (std::size_t e = 0; e < model.config.entity_count; ++e) {
        entity_vecs_.push_back(embed_entity(model, e));
      }
    }
  }

  RankedList rank(const std::string& query) const { return rank_tokens(query_tokens(query, vocab_)); }

  RankedList rank_tokens(const std::vector<int>& words) const {
    const auto& c = model_.config;
    std::vector<double> scores(c.entity_count);
    if (c.variant == Variant::full) {
      ad::Tape<T> tape(false);
      auto enc = encode_batch(tape, model_.params, c, {entity_text_sequence(Vocabulary::kMask, words)});
      const auto z = mlm_logits(tape, model_.params, enc.hidden, {kEntityPosition}).value();
      for (std::size_t e = 0; e < c.entity_count; ++e) scores[e] = static_cast<double>(z(0, c.entity_base() + e));
    } else {
      const auto f = encode(model_, text_sequence(words)).cls_vector;
      for (std::size_t e = 0; e < c.entity_count; ++e) {
        scores[e] = static_cast<double>(compatibility<T>(entity_vecs_[e], f));
      }
    }
    return RankedList::sorted(vocab_.entity_ids(), std::move(scores));
  }

 private:
  const Model<T>& model_;
  const Vocabulary& vocab_;
  std::vector<std::vector<T>> entity_vecs_;
};

template <class T>
RankedList zero_shot_rank(const Model<T>& model, const Vocabulary& vocab, const std::string& query) {
  return ZeroShotRanker<T>(model, vocab).rank(query);
}

enum class Aggregation { max, mean };

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "max") return Aggregation::max;
  if (s == "mean") return Aggregation::mean;
  throw std::invalid_argument("unknown aggregation '" + s + "' (expected max or mean)");
}

/// Bag-of-Sentences: each entity is the set of its sentence encodings (mean
/// of token outputs); a query scores max or mean cosine over the set.
template <class T>
class BagOfSentences {
 public:
  BagOfSentences(const Model<T>& model, const std::vector<std::string>& entity_ids,
                 const std::map<std::string, std::vector<std::vector<int>>>& sentences)
      : model_(model), ids_(entity_ids) {
    for (const auto& id : ids_) {
      auto it = sentences.find(id);
      if (it == sentences.end() || it->second.empty()) {
        throw DataError("entity '" + id + "' has no sentences");
      }
      bags_.push_back(encode_texts(model, it->second).mean);
    }
  }

  std::vector<double> entity_scores(const std::vector<T>& query_vec, Aggregation agg) const {
    std::vector<double> scores;
    for (const auto& bag : bags_) {
      double best = -2.0, sum = 0.0;
      for (const auto& s : bag) {
        const double c = static_cast<double>(cosine<T>(query_vec, s));
        best = std::max(best, c);
        sum += c;
      }
      scores.push_back(agg == Aggregation::max ? best : sum / static_cast<double>(bag.size()));
    }
    return scores;
  }

  RankedList rank_tokens(const std::vector<int>& words, Aggregation agg) const {
    const auto q = encode_texts(model_, {words}).mean.front();
    return RankedList::sorted(ids_, entity_scores(q, agg));
  }

 private:
  const Model<T>& model_;
  std::vector<std::string> ids_;
  std::vector<std::vector<std::vector<T>>> bags_;
};

template <class T>
RankedList bos_rank(const Model<T>& model, const std::vector<int>& query_words,
                    const std::vector<std::string>& entity_ids,
                    const std::map<std::string, std::vector<std::vector<int>>>& sentences,
                    Aggregation agg) {
  return BagOfSentences<T>(model, entity_ids, sentences).rank_tokens(query_words, agg);
}

}  // namespace docent::eval
