#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <tuple>
#include <set>
#include <string>
#include <vector>

#include "docent/encoder/model.hpp"
#include "docent/finetune/tag_votes.hpp"
#include "docent/numerics/adam.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/objectives/losses.hpp"
#include "docent/rng.hpp"
#include "docent/text/io.hpp"
#include "docent/text/tokenizer.hpp"

namespace docent {

enum class WeightMode { linear, log1p };

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "linear") return WeightMode::linear;
  if (s == "log1p") return WeightMode::log1p;
  throw std::invalid_argument("unknown weight mode '" + s + "' (expected linear or log1p)");
}

/// Weight of a positive (entity, tag) example from its vote count.
inline double example_weight(int votes, WeightMode mode) {
  if (votes < 1) throw std::invalid_argument("example_weight: votes must be >= 1 (positives only)");
  return mode == WeightMode::linear ? static_cast<double>(votes) : std::log1p(static_cast<double>(votes));
}

/// floor(rate * |vocab|) tags drawn uniformly without replacement from
/// vocab minus positives (fewer when the complement is smaller).
inline std::vector<std::string> sample_negatives(const std::vector<std::string>& vocab,
                                                 const std::set<std::string>& positives, double rate,
                                                 Rng& rng,
                                                 const std::function<void(const std::string&)>& warn = {}) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("negative rate must lie in (0, 1]");
  std::vector<std::string> pool;
  for (const auto& t : vocab) if (!positives.count(t)) pool.push_back(t);
  if (pool.empty()) {
    if (warn) warn("no negative tags available: every tag is a positive");
    return {};
  }
  const auto want = static_cast<std::size_t>(std::floor(rate * static_cast<double>(vocab.size())));
  const std::size_t n = std::min(want, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

struct FinetuneConfig {
  double negative_rate = 0.10;
  WeightMode weight_mode = WeightMode::log1p;
  std::size_t epochs = 2;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double tau = 4.0;
  bool freeze_entities = true;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(negative_rate > 0.0 && negative_rate <= 1.0)) {
      throw std::invalid_argument("negative_rate must lie in (0, 1]");
    }
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  }
};

/// Closed protocol holds out entities (every tag is seen in training); the
/// open protocol holds out tags (every entity is seen).
struct Split {
  std::vector<std::string> train_entities, test_entities;
  std::vector<std::string> train_tags, test_tags;
};

namespace detail {

inline std::pair<std::vector<std::string>, std::vector<std::string>> hold_out(
    std::vector<std::string> items, double fraction, Rng rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must lie in (0, 1)");
  std::sort(items.begin(), items.end());
  std::shuffle(items.begin(), items.end(), rng.engine());
  const auto n = static_cast<std::size_t>(std::round(fraction * static_cast<double>(items.size())));
  std::vector<std::string> test(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::string> train(items.begin() + static_cast<std::ptrdiff_t>(n), items.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

}  // namespace detail

inline Split closed_split(const std::vector<std::string>& entities, const std::vector<std::string>& tags,
                          double fraction, std::uint64_t seed) {
  Split s;
  std::tie(s.train_entities, s.test_entities) = detail::hold_out(entities, fraction, Rng(seed).child("closed"));
  s.train_tags = tags;
  s.test_tags = tags;
  return s;
}

inline Split open_split(const std::vector<std::string>& entities, const std::vector<std::string>& tags,
                        double fraction, std::uint64_t seed) {
  Split s;
  std::tie(s.train_tags, s.test_tags) = detail::hold_out(tags, fraction, Rng(seed).child("open"));
  s.train_entities = entities;
  s.test_entities = entities;
  std::sort(s.train_entities.begin(), s.train_entities.end());
  s.test_entities = s.train_entities;
  return s;
}

struct FinetuneHooks {
  /// Every tag string placed in a training batch (positives and negatives).
  std::function<void(const std::vector<std::string>& tags)> on_batch;
  std::function<void(std::size_t step, double loss)> on_step;
  std::function<void(const std::string&)> on_warning;
};

struct PositivePair {
  std::string entity;
  std::string tag;
  double weight = 1.0;
};

/// Positive training pairs restricted to the split's training entities and tags.
inline std::vector<PositivePair> training_positives(const TagVotes& votes, const Split& split,
                                                    WeightMode mode) {
  const std::set<std::string> tags(split.train_tags.begin(), split.train_tags.end());
  std::vector<PositivePair> out;
  for (const auto& e : split.train_entities) {
    for (const auto& [t, n] : votes.of(e)) {
      if (tags.count(t)) out.push_back({e, t, example_weight(n, mode)});
    }
  }
  return out;
}

namespace detail {

inline void require_entities(const Vocabulary& vocab, const std::vector<std::string>& entities) {
  for (const auto& e : entities) {
    if (!vocab.has_entity(e)) throw DataError("unknown entity '" + e + "'");
  }
}

inline std::vector<int> tag_tokens(const std::string& tag, const Vocabulary& vocab) {
  auto ids = tokenize(tag, vocab);
  if (ids.empty()) ids.push_back(Vocabulary::kUnk);
  return ids;
}

/// Removes the gradient of the rows holding g(.) so Adam leaves them alone.
template <class T>
void freeze_entity_gradients(Gradients<T>& grads, const ModelConfig& c) {
  const auto where = entity_storage(c);
  if (c.variant != Variant::full) {
    grads.erase(where.tensor);
    return;
  }
  auto& g = grads.at(where.tensor);
  for (std::size_t r = where.first_row; r < where.first_row + where.rows; ++r) {
    std::fill(g.row(r).begin(), g.row(r).end(), T{0});
  }
}

template <class T>
void apply(Model<T>& model, Gradients<T> grads, AdamState<T>& adam, bool freeze) {
  if (freeze) freeze_entity_gradients(grads, model.config);
  adam_step(model.params, grads, adam);
}

}  // namespace detail

/// Weighted logistic loss of the classifier head on [CLS] e [SEP] tag [SEP] rows.
template <class T>
ad::Var<T> full_tag_loss(ad::Tape<T>& tape, const ParamStore<T>& params, const ModelConfig& config,
                         const std::vector<Sequence>& seqs, const std::vector<T>& labels,
                         const std::vector<T>& weights) {
  auto enc = encode_batch(tape, params, config, seqs);
  auto logits = classifier_logits(tape, params, ad::rows(enc.hidden, enc.cls_rows()));
  return ad::sigmoid_binary_cross_entropy(logits, labels, weights);
}

/// One dual/hybrid fine-tuning batch. Row r scores g(entities[r]) against
/// tags[candidates[r][j]]; the positive is always candidates[r][0].
struct TagBatch {
  std::vector<std::string> tags;
  std::vector<std::size_t> entities;
  std::vector<std::vector<std::size_t>> candidates;
  std::vector<double> weights;
};

/// Sum over rows of weight_r / sum(weights) times the softmax cross-entropy of
/// the positive among the row's candidates. `scores` is [rows x tags].
template <class T>
ad::Var<T> candidate_softmax_loss(const ad::Var<T>& scores, const std::vector<std::vector<std::size_t>>& candidates,
                                  const std::vector<double>& weights) {
  const std::size_t nt = scores.cols();
  double wsum = 0.0;
  for (const double w : weights) wsum += w;
  ad::Var<T> loss = scores.tape->constant(Tensor<T>::scalar(T{0}));
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    std::vector<std::size_t> flat;
    for (const auto c : candidates[r]) flat.push_back(r * nt + c);
    auto row = ad::gather_elements(scores, std::move(flat), 1, candidates[r].size());
    auto ce = ad::softmax_cross_entropy(row, {0});
    loss = ad::add(loss, ad::scale(ce, static_cast<T>(weights[r] / wsum)));
  }
  return loss;
}

template <class T>
ad::Var<T> dual_tag_loss(ad::Tape<T>& tape, const ParamStore<T>& params, const ModelConfig& config,
                         const Vocabulary& vocab, const TagBatch& batch, double tau) {
  std::vector<Sequence> seqs;
  for (const auto& t : batch.tags) seqs.push_back(text_sequence(detail::tag_tokens(t, vocab)));
  auto enc = encode_batch(tape, params, config, seqs);
  auto tag_vecs = ad::rows(enc.hidden, enc.cls_rows());
  auto g = entity_rows(tape, params, config, batch.entities);
  return candidate_softmax_loss(scaled_cosine_scores(g, tag_vecs, tau), batch.candidates, batch.weights);
}

/// Binary classification on [CLS] e [SEP] tag [SEP] for the full variant:
/// positives weighted by votes, sampled negatives weight 1, entity rows of
/// the token embedding frozen. Returns the per-step loss trace.
inline std::vector<double> finetune_full(Model<float>& model, const Vocabulary& vocab, const TagVotes& votes,
                                         const Split& split, const FinetuneConfig& config,
                                         const FinetuneHooks& hooks = {}) {
  config.validate();
  if (model.config.variant != Variant::full) throw std::invalid_argument("finetune_full needs a full-variant model");
  detail::require_entities(vocab, split.train_entities);
  const auto positives = training_positives(votes, split, config.weight_mode);
  Rng root(config.seed);
  Rng neg_rng = root.child("negatives"), order_rng = root.child("order");
  AdamState<float> adam;
  adam.config.lr = config.lr;
  std::vector<double> trace;

  struct Example {
    std::string entity, tag;
    float label, weight;
  };
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Example> examples;
    for (const auto& p : positives) examples.push_back({p.entity, p.tag, 1.0f, static_cast<float>(p.weight)});
    for (const auto& e : split.train_entities) {
      std::set<std::string> pos;
      for (const auto& [t, _] : votes.of(e)) pos.insert(t);
      for (auto& t : sample_negatives(split.train_tags, pos, config.negative_rate, neg_rng, hooks.on_warning)) {
        examples.push_back({e, std::move(t), 0.0f, 1.0f});
      }
    }
    std::shuffle(examples.begin(), examples.end(), order_rng.engine());
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
      const std::size_t end = std::min(examples.size(), start + config.batch_size);
      std::vector<Sequence> seqs;
      std::vector<float> labels, weights;
      std::vector<std::string> batch_tags;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[i];
        seqs.push_back(entity_text_sequence(vocab.entity_token(ex.entity), detail::tag_tokens(ex.tag, vocab)));
        labels.push_back(ex.label);
        weights.push_back(ex.weight);
        batch_tags.push_back(ex.tag);
      }
      if (hooks.on_batch) hooks.on_batch(batch_tags);
      ad::Tape<float> tape;
      auto loss = full_tag_loss(tape, model.params, model.config, seqs, labels, weights);
      if (!std::isfinite(loss.item())) throw NumericError("non-finite fine-tuning loss");
      tape.backward(loss);
      detail::apply(model, tape.gradients(model.params), adam, config.freeze_entities);
      trace.push_back(loss.item());
      if (hooks.on_step) hooks.on_step(trace.size(), trace.back());
    }
  }
  return trace;
}

/// Softmax over {t} and sampled negative tags for every positive (m, t);
/// tags encoded by their CLS output and scored against g(m) by scaled cosine.
/// Shared by the dual and hybrid variants; the entity table stays frozen.
inline std::vector<double> finetune_dual(Model<float>& model, const Vocabulary& vocab, const TagVotes& votes,
                                         const Split& split, const FinetuneConfig& config,
                                         const FinetuneHooks& hooks = {}) {
  config.validate();
  if (model.config.variant == Variant::full) throw std::invalid_argument("finetune_dual needs a dual or hybrid model");
  detail::require_entities(vocab, split.train_entities);
  auto positives = training_positives(votes, split, config.weight_mode);
  Rng root(config.seed);
  Rng neg_rng = root.child("negatives"), order_rng = root.child("order");
  AdamState<float> adam;
  adam.config.lr = config.lr;
  std::vector<double> trace;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(positives.begin(), positives.end(), order_rng.engine());
    for (std::size_t start = 0; start < positives.size(); start += config.batch_size) {
      const std::size_t end = std::min(positives.size(), start + config.batch_size);
      // candidates deduplicated across the batch
      TagBatch batch;
      std::map<std::string, std::size_t> tag_slot;
      auto slot = [&](const std::string& t) {
        auto [it, fresh] = tag_slot.emplace(t, batch.tags.size());
        if (fresh) batch.tags.push_back(t);
        return it->second;
      };
      for (std::size_t i = start; i < end; ++i) {
        const auto& p = positives[i];
        std::set<std::string> pos;
        for (const auto& [t, _] : votes.of(p.entity)) pos.insert(t);
        std::vector<std::size_t> c{slot(p.tag)};
        for (const auto& t : sample_negatives(split.train_tags, pos, config.negative_rate, neg_rng, hooks.on_warning)) {
          c.push_back(slot(t));
        }
        batch.candidates.push_back(std::move(c));
        batch.entities.push_back(vocab.entity_index(p.entity));
        batch.weights.push_back(p.weight);
      }
      if (hooks.on_batch) hooks.on_batch(batch.tags);
      ad::Tape<float> tape;
      auto loss = dual_tag_loss(tape, model.params, model.config, vocab, batch, config.tau);
      if (!std::isfinite(loss.item())) throw NumericError("non-finite fine-tuning loss");
      tape.backward(loss);
      detail::apply(model, tape.gradients(model.params), adam, config.freeze_entities);
      trace.push_back(loss.item());
      if (hooks.on_step) hooks.on_step(trace.size(), trace.back());
    }
  }
  return trace;
}

inline std::vector<double> finetune(Model<float>& model, const Vocabulary& vocab, const TagVotes& votes,
                                    const Split& split, const FinetuneConfig& config,
                                    const FinetuneHooks& hooks = {}) {
  return model.config.variant == Variant::full ? finetune_full(model, vocab, votes, split, config, hooks)
                                               : finetune_dual(model, vocab, votes, split, config, hooks);
}

/// Scores tags for entities: classifier probability for full, tau-scaled
/// cosine between g(m) and the tag's CLS encoding otherwise.
template <class T>
class TagScorer {
 public:
  TagScorer(const Model<T>& model, const Vocabulary& vocab, std::vector<std::string> tags, double tau = 4.0)
      : model_(model), vocab_(vocab), tags_(std::move(tags)), tau_(tau) {
    if (model.config.variant != Variant::full) {
      std::vector<Sequence> seqs;
      for (const auto& t : tags_) seqs.push_back(text_sequence(detail::tag_tokens(t, vocab)));
      for (std::size_t s = 0; s < seqs.size(); s += 128) {
        ad::Tape<T> tape(false);
        std::vector<Sequence> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(s),
                                    seqs.begin() + static_cast<std::ptrdiff_t>(std::min(seqs.size(), s + 128)));
        const auto enc = encode_batch(tape, model.params, model.config, chunk);
        for (const auto r : enc.cls_rows()) {
          auto row = enc.hidden.value().row(r);
          tag_vecs_.emplace_back(row.begin(), row.end());
        }
      }
    }
  }

  const std::vector<std::string>& tags() const { return tags_; }

  std::vector<double> scores(const std::string& entity) const {
    if (!vocab_.has_entity(entity)) throw DataError("unknown entity '" + entity + "'");
    std::vector<double> out;
    out.reserve(tags_.size());
    if (model_.config.variant == Variant::full) {
      const int tok = vocab_.entity_token(entity);
      for (std::size_t s = 0; s < tags_.size(); s += 128) {
        std::vector<Sequence> seqs;
        for (std::size_t i = s; i < std::min(tags_.size(), s + 128); ++i) {
          seqs.push_back(entity_text_sequence(tok, detail::tag_tokens(tags_[i], vocab_)));
        }
        ad::Tape<T> tape(false);
        const auto enc = encode_batch(tape, model_.params, model_.config, seqs);
        const auto z = classifier_logits(tape, model_.params, ad::rows(enc.hidden, enc.cls_rows())).value();
        for (std::size_t i = 0; i < z.size(); ++i) out.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(z[i]))));
      }
    } else {
      const auto g = embed_entity(model_, vocab_.entity_index(entity));
      for (const auto& v : tag_vecs_) out.push_back(tau_ * static_cast<double>(cosine<T>(g, v)));
    }
    return out;
  }

 private:
  const Model<T>& model_;
  const Vocabulary& vocab_;
  std::vector<std::string> tags_;
  double tau_;
  std::vector<std::vector<T>> tag_vecs_;
};

template <class T>
std::vector<double> predict_tag_scores(const Model<T>& model, const Vocabulary& vocab, const std::string& entity,
                                       const std::vector<std::string>& tags, double tau = 4.0) {
  return TagScorer<T>(model, vocab, tags, tau).scores(entity);
}

/// TSV rows (entity_id, tag, score), by entity then descending score.
inline void write_predictions(const std::string& path, const std::vector<std::string>& entities,
                              const std::vector<std::string>& tags,
                              const std::vector<std::vector<double>>& scores) {
  auto out = io::open_out(path);
  out.precision(9);
  std::vector<std::size_t> order(entities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return entities[a] < entities[b]; });
  for (const auto e : order) {
    std::vector<std::size_t> idx(tags.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      if (scores[e][a] != scores[e][b]) return scores[e][a] > scores[e][b];
      return tags[a] < tags[b];
    });
    for (const auto j : idx) out << entities[e] << '\t' << tags[j] << '\t' << scores[e][j] << '\n';
  }
}

}  // namespace docent
