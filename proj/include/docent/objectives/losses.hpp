#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

#include "docent/encoder/model.hpp"
#include "docent/numerics/autodiff.hpp"
#include "docent/objectives/batch.hpp"

namespace docent {

/// Total loss node plus its two terms (already averaged over their counts).
template <class T>
struct LossParts {
  ad::Var<T> total;
  double entity = 0.0;
  double mlm = 0.0;
  std::size_t entity_count = 0;
  std::size_t mlm_count = 0;
};

/// Unique entity indices of a batch (ascending) and each row's slot among them.
struct CandidateSet {
  std::vector<std::size_t> entities;
  std::vector<std::size_t> targets;
};

inline CandidateSet unique_candidates(const std::vector<std::size_t>& row_entities) {
  CandidateSet c;
  c.entities = row_entities;
  std::sort(c.entities.begin(), c.entities.end());
  c.entities.erase(std::unique(c.entities.begin(), c.entities.end()), c.entities.end());
  for (const auto e : row_entities) {
    c.targets.push_back(static_cast<std::size_t>(
        std::lower_bound(c.entities.begin(), c.entities.end(), e) - c.entities.begin()));
  }
  return c;
}

/// tau * cosine(text_i, candidate_j) as a [B x U] node.
template <class T>
ad::Var<T> scaled_cosine_scores(ad::Var<T> text_vecs, ad::Var<T> candidate_vecs, double tau) {
  return ad::scale(ad::matmul_nt(ad::l2_normalize_rows(text_vecs),
                                 ad::l2_normalize_rows(candidate_vecs)),
                   static_cast<T>(tau));
}

/// Mean over rows of -log softmax(tau * s(e_j, s_i))[target_i] against the
/// candidate rows; the in-batch entity loss on injected vectors.
template <class T>
ad::Var<T> in_batch_entity_loss(ad::Var<T> text_vecs, ad::Var<T> candidate_vecs,
                                const std::vector<std::size_t>& targets, double tau) {
  return ad::softmax_cross_entropy(scaled_cosine_scores(text_vecs, candidate_vecs, tau), targets);
}

namespace detail {

template <class T>
ad::Var<T> entity_term(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                       const MaskedBatch& batch, const EncodedBatch<T>& enc, double tau) {
  const CandidateSet cand = unique_candidates(batch.entities);
  auto cls = ad::rows(enc.hidden, enc.cls_rows());
  auto g = entity_rows(tape, p, c, cand.entities);
  return in_batch_entity_loss(cls, g, cand.targets, tau);
}

struct MaskedRows {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> entities;
};

template <class T>
MaskedRows masked_rows(const MaskedBatch& batch, const EncodedBatch<T>& enc) {
  MaskedRows m;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < batch.positions[i].size(); ++k) {
      m.rows.push_back(enc.row(i, batch.positions[i][k]));
      m.labels.push_back(static_cast<std::size_t>(batch.labels[i][k]));
      m.entities.push_back(batch.entities[i]);
    }
  }
  return m;
}

template <class T>
ad::Var<T> combine(ad::Var<T> entity, ad::Var<T> mlm, double lambda) {
  return ad::add(entity, ad::scale(mlm, static_cast<T>(lambda)));
}

}  // namespace detail

/// In-batch softmax over unique batch entities; masking in `batch` is ignored
/// by construction (dual batches are unmasked).
template <class T>
LossParts<T> dual_loss(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                       const MaskedBatch& batch, double tau) {
  if (batch.size() == 0) throw std::invalid_argument("dual_loss: empty batch");
  auto enc = encode_batch(tape, p, c, batch.inputs);
  LossParts<T> out;
  out.total = detail::entity_term(tape, p, c, batch, enc, tau);
  out.entity = static_cast<double>(out.total.item());
  out.entity_count = batch.size();
  return out;
}

/// L_E (entity token predicted over the full extended vocabulary on flagged
/// rows) + lambda * L_MLM+E (masked words, entity token visible elsewhere).
template <class T>
LossParts<T> full_loss(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                       const MaskedBatch& batch, double lambda) {
  if (c.variant != Variant::full) throw std::invalid_argument("full_loss needs a full-variant model");
  auto enc = encode_batch(tape, p, c, batch.inputs);
  std::vector<std::size_t> e_rows, e_labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.entity_masked[i]) continue;
    e_rows.push_back(enc.row(i, kEntityPosition));
    e_labels.push_back(c.entity_base() + batch.entities[i]);
  }
  const auto words = detail::masked_rows(batch, enc);
  LossParts<T> out;
  out.entity_count = e_rows.size();
  out.mlm_count = words.rows.size();
  auto le = ad::softmax_cross_entropy(mlm_logits(tape, p, enc.hidden, std::move(e_rows)), e_labels);
  auto lm = ad::softmax_cross_entropy(mlm_logits(tape, p, enc.hidden, words.rows), words.labels);
  out.entity = static_cast<double>(le.item());
  out.mlm = static_cast<double>(lm.item());
  out.total = detail::combine(le, lm, lambda);
  return out;
}

/// Dual term on the (masked) sentence encodings + lambda * cross-entropy of
/// the hybrid head, whose input concatenates each masked state with g(e).
template <class T>
LossParts<T> hybrid_loss(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                         const MaskedBatch& batch, double tau, double lambda) {
  if (c.variant != Variant::hybrid) {
    throw std::invalid_argument("hybrid_loss needs a hybrid-variant model");
  }
  if (batch.size() == 0) throw std::invalid_argument("hybrid_loss: empty batch");
  auto enc = encode_batch(tape, p, c, batch.inputs);
  LossParts<T> out;
  auto le = detail::entity_term(tape, p, c, batch, enc, tau);
  out.entity = static_cast<double>(le.item());
  out.entity_count = batch.size();
  const auto words = detail::masked_rows(batch, enc);
  out.mlm_count = words.rows.size();
  out.total = le;
  if (words.rows.empty()) return out;
  auto lm = ad::softmax_cross_entropy(
      hybrid_mlm_logits(tape, p, enc.hidden, words.rows, entity_rows(tape, p, c, words.entities)),
      words.labels);
  out.mlm = static_cast<double>(lm.item());
  // lambda = 0 keeps the graph identical to the dual loss
  if (lambda != 0.0) out.total = detail::combine(le, lm, lambda);
  return out;
}

template <class T>
LossParts<T> variant_loss(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                          const MaskedBatch& batch, const TrainingConfig& t) {
  switch (c.variant) {
    case Variant::dual: return dual_loss(tape, p, c, batch, t.tau);
    case Variant::full: return full_loss(tape, p, c, batch, t.lambda);
    case Variant::hybrid: return hybrid_loss(tape, p, c, batch, t.tau, t.lambda);
  }
  throw std::logic_error("unknown variant");
}

}  // namespace docent
