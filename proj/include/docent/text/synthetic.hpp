#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "docent/finetune/tag_votes.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/rng.hpp"
#include "docent/text/corpus.hpp"

namespace docent {

/// Shape of a generated entity-attribute world.
struct SyntheticWorldSpec {
  std::size_t entities = 100;
  std::size_t attribute_vocab = 200;
  std::size_t attributes_per_entity = 20;
  std::size_t sentences_per_entity = 50;
  std::size_t words_per_sentence = 10;
  /// Probability that a word slot holds a noise word instead of an attribute.
  double noise_ratio = 0.3;
  /// Filler words that are never attributes.
  std::size_t filler_vocab = 300;
  /// When set, noise is drawn from filler words and attribute words alike.
  bool noise_includes_attributes = true;
  /// Zipf exponent of noise-word popularity (0 = uniform).
  double noise_zipf = 1.0;
  /// Attribute words per query; 0 uses the entity's full attribute set.
  std::size_t query_attributes = 0;
  std::size_t queries_per_entity = 1;
  std::uint64_t seed = 7;

  void validate() const {
    if (entities < 1 || attribute_vocab < 1 || attributes_per_entity < 1 ||
        sentences_per_entity < 1 || words_per_sentence < 1 || queries_per_entity < 1) {
      throw std::invalid_argument("synthetic world counts must be >= 1");
    }
    if (!(noise_ratio >= 0.0 && noise_ratio < 1.0)) {
      throw std::invalid_argument("noise ratio must lie in [0, 1)");
    }
    if (attribute_vocab < attributes_per_entity) {
      throw std::invalid_argument("attribute vocabulary (" + std::to_string(attribute_vocab) +
                                  ") smaller than attributes per entity (" +
                                  std::to_string(attributes_per_entity) + ")");
    }
    if (noise_ratio > 0.0 && filler_vocab == 0 && !noise_includes_attributes) {
      throw std::invalid_argument("noise requested but the noise pool is empty");
    }
    if (query_attributes > attributes_per_entity) {
      throw std::invalid_argument("query_attributes exceeds attributes per entity");
    }
  }
};

struct SyntheticQuery {
  std::string text;
  std::vector<std::string> relevant_entity_ids;
};

struct SyntheticWorld {
  std::vector<std::string> entity_ids;
  std::vector<std::string> entity_names;
  std::vector<std::string> attribute_words;  // also the tag vocabulary
  std::vector<std::vector<std::string>> attributes;  // per entity, sorted
  std::vector<SentenceText> sentences;  // grouped by entity, in entity order
  std::vector<SyntheticQuery> queries;
  TagVotes votes;

  /// One review per sentence, text rendered with a trailing period.
  std::vector<RawReview> reviews() const {
    std::vector<RawReview> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) {
      RawReview r;
      r.entity_id = s.entity_id;
      for (std::size_t i = 0; i < entity_ids.size(); ++i) {
        if (entity_ids[i] == s.entity_id) {
          r.entity_name = entity_names[i];
          break;
        }
      }
      for (std::size_t w = 0; w < s.words.size(); ++w) {
        if (w) r.text += ' ';
        r.text += s.words[w];
      }
      r.text += '.';
      out.push_back(std::move(r));
    }
    return out;
  }
};

namespace detail {

inline std::string padded(std::size_t i, std::size_t total) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::to_string(total > 0 ? total - 1 : 0).size();
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return digits;
}

/// Number of query words shared with each entity's attribute set.
inline std::vector<std::size_t> attribute_overlap(
    const std::vector<std::string>& query_words,
    const std::vector<std::vector<std::string>>& attributes) {
  std::vector<std::size_t> overlap(attributes.size(), 0);
  const std::set<std::string> q(query_words.begin(), query_words.end());
  for (std::size_t e = 0; e < attributes.size(); ++e) {
    for (const auto& a : attributes[e]) overlap[e] += q.count(a);
  }
  return overlap;
}

}  // namespace detail

/// Deterministic world: every entity owns a fixed attribute set, sentences mix
/// owned attributes with noise words, votes count the sentences that mention
/// each tag, and each query is a fresh noise-free attribute sentence whose
/// generating entity is its unique best attribute-overlap match (ties are
/// listed as extra relevant entities when no unique query exists).
inline SyntheticWorld generate_synthetic(const SyntheticWorldSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng assign_rng = root.child("attributes");
  Rng noise_rng = root.child("noise-pool");
  Rng sentence_rng = root.child("sentences");
  Rng query_rng = root.child("queries");

  SyntheticWorld world;
  for (std::size_t a = 0; a < spec.attribute_vocab; ++a) {
    world.attribute_words.push_back("attr" + detail::padded(a, spec.attribute_vocab));
  }
  for (std::size_t e = 0; e < spec.entities; ++e) {
    world.entity_ids.push_back("e" + detail::padded(e, spec.entities));
    world.entity_names.push_back("title " + detail::padded(e, spec.entities));
  }

  std::vector<std::size_t> all_attr(spec.attribute_vocab);
  std::iota(all_attr.begin(), all_attr.end(), std::size_t{0});
  for (std::size_t e = 0; e < spec.entities; ++e) {
    std::vector<std::size_t> pick = all_attr;
    std::shuffle(pick.begin(), pick.end(), assign_rng.engine());
    pick.resize(spec.attributes_per_entity);
    std::sort(pick.begin(), pick.end());
    std::vector<std::string> words;
    for (const auto a : pick) words.push_back(world.attribute_words[a]);
    world.attributes.push_back(std::move(words));
  }

  std::vector<std::string> noise_pool;
  for (std::size_t f = 0; f < spec.filler_vocab; ++f) {
    noise_pool.push_back("filler" + detail::padded(f, spec.filler_vocab));
  }
  if (spec.noise_includes_attributes) {
    noise_pool.insert(noise_pool.end(), world.attribute_words.begin(),
                      world.attribute_words.end());
  }
  std::shuffle(noise_pool.begin(), noise_pool.end(), noise_rng.engine());
  std::vector<double> noise_weights(noise_pool.size());
  for (std::size_t r = 0; r < noise_pool.size(); ++r) {
    noise_weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec.noise_zipf);
  }
  std::discrete_distribution<std::size_t> noise_dist(noise_weights.begin(),
                                                     noise_weights.end());

  for (std::size_t e = 0; e < spec.entities; ++e) {
    const auto& owned = world.attributes[e];
    for (std::size_t s = 0; s < spec.sentences_per_entity; ++s) {
      std::vector<bool> noisy(spec.words_per_sentence);
      std::size_t attr_slots = 0;
      for (std::size_t w = 0; w < spec.words_per_sentence; ++w) {
        noisy[w] = spec.noise_ratio > 0.0 && sentence_rng.bernoulli(spec.noise_ratio);
        if (!noisy[w]) ++attr_slots;
      }
      // attributes without replacement while the set lasts
      std::vector<std::size_t> order(owned.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), sentence_rng.engine());
      std::size_t next_attr = 0;
      SentenceText sentence;
      sentence.entity_id = world.entity_ids[e];
      sentence.review = s;
      for (std::size_t w = 0; w < spec.words_per_sentence; ++w) {
        if (noisy[w]) {
          sentence.words.push_back(noise_pool[noise_dist(sentence_rng.engine())]);
        } else if (next_attr < order.size()) {
          sentence.words.push_back(owned[order[next_attr++]]);
        } else {
          sentence.words.push_back(owned[sentence_rng.below(owned.size())]);
        }
      }
      world.sentences.push_back(std::move(sentence));
    }
  }

  // votes: sentences of m that mention tag t
  for (const auto& tag : world.attribute_words) world.votes.add_tag(tag);
  const std::set<std::string> tag_set(world.attribute_words.begin(), world.attribute_words.end());
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& s : world.sentences) {
    std::set<std::string> mentioned;
    for (const auto& w : s.words) {
      if (tag_set.count(w)) mentioned.insert(w);
    }
    for (const auto& t : mentioned) ++counts[{s.entity_id, t}];
  }
  for (const auto& [key, n] : counts) world.votes.set(key.first, key.second, n);

  const std::size_t q_len =
      spec.query_attributes == 0 ? spec.attributes_per_entity : spec.query_attributes;
  for (std::size_t e = 0; e < spec.entities; ++e) {
    for (std::size_t qi = 0; qi < spec.queries_per_entity; ++qi) {
      bool unique = false;
      std::vector<std::string> words;
      for (int attempt = 0; attempt < 100 && !unique; ++attempt) {
        words = world.attributes[e];
        std::shuffle(words.begin(), words.end(), query_rng.engine());
        words.resize(q_len);
        const auto overlap = detail::attribute_overlap(words, world.attributes);
        unique = true;
        for (std::size_t o = 0; o < overlap.size(); ++o) {
          if (o != e && overlap[o] >= overlap[e]) unique = false;
        }
      }
      SyntheticQuery q;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (w) q.text += ' ';
        q.text += words[w];
      }
      q.relevant_entity_ids = {world.entity_ids[e]};
      if (!unique) {
        // Only reachable when attribute sets collide; every entity tied at
        // the best overlap is then an equally correct answer.
        const auto overlap = detail::attribute_overlap(words, world.attributes);
        for (std::size_t o = 0; o < overlap.size(); ++o) {
          if (o != e && overlap[o] >= overlap[e]) q.relevant_entity_ids.push_back(world.entity_ids[o]);
        }
      }
      world.queries.push_back(std::move(q));
    }
  }
  return world;
}

/// Vocabulary over the world's sentences (min_freq 1) extended with its entities.
inline Vocabulary world_vocabulary(const SyntheticWorld& world) {
  std::vector<std::vector<std::string>> words;
  words.reserve(world.sentences.size() + world.attribute_words.size());
  for (const auto& s : world.sentences) words.push_back(s.words);
  // tags and query words must be addressable even when rare in text
  words.push_back(world.attribute_words);
  return extend_with_entities(build_vocab(words, 1), world.entity_ids);
}

}  // namespace docent
