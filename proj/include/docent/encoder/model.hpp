#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "docent/encoder/config.hpp"
#include "docent/numerics/autodiff.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/numerics/functional.hpp"
#include "docent/numerics/params.hpp"
#include "docent/rng.hpp"
#include "docent/text/vocabulary.hpp"

namespace docent {

using Shape = std::vector<std::size_t>;

inline std::string block_param(std::size_t layer, const char* name) {
  return "block" + std::to_string(layer) + "." + name;
}

/// Every learnable tensor the config implies, by name.
inline std::map<std::string, Shape> parameter_shapes(const ModelConfig& c) {
  const std::size_t h = c.hidden, f = c.ffn_hidden, v = c.vocab_size;
  std::map<std::string, Shape> s;
  s["tok.emb"] = {v, h};
  s["pos.emb"] = {c.max_seq_len, h};
  s["seg.emb"] = {2, h};
  s["emb.ln.g"] = {h};
  s["emb.ln.b"] = {h};
  for (std::size_t l = 0; l < c.layers; ++l) {
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) s[block_param(l, w)] = {h, h};
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo", "ln1.g", "ln1.b", "ffn.b2",
                          "ln2.g", "ln2.b"}) {
      s[block_param(l, b)] = {h};
    }
    s[block_param(l, "ffn.w1")] = {h, f};
    s[block_param(l, "ffn.b1")] = {f};
    s[block_param(l, "ffn.w2")] = {f, h};
  }
  if (c.variant != Variant::dual) {
    s["mlm.dense.w"] = {h, h};
    s["mlm.dense.b"] = {h};
    s["mlm.ln.g"] = {h};
    s["mlm.ln.b"] = {h};
  }
  if (c.variant == Variant::full) {
    s["mlm.bias"] = {v};
    s["cls.w"] = {h, 1};
    s["cls.b"] = {1};
  } else {
    s["entity.table"] = {c.entity_count, c.entity_dim};
  }
  if (c.variant == Variant::hybrid) {
    s["hybrid.decoder"] = {v, h + c.entity_dim};
    s["hybrid.bias"] = {v};
  }
  return s;
}

namespace detail {

inline std::string_view leaf_name(const std::string& name) {
  const auto dot = name.rfind('.');
  return std::string_view(name).substr(dot == std::string::npos ? 0 : dot + 1);
}

// Leaf "g" is a layer-norm gain; leaves starting with 'b' are biases.
inline bool is_gain(const std::string& name) { return leaf_name(name) == "g"; }
inline bool is_bias(const std::string& name) { return leaf_name(name).front() == 'b'; }

}  // namespace detail

/// Weights N(0, std) truncated at two standard deviations; LN gains 1, biases 0.
/// Tensors are drawn in name order from per-tensor child streams.
template <class T>
ParamStore<T> init_params(const ModelConfig& config, const Rng& rng) {
  config.validate();
  ParamStore<T> store;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    Tensor<T> t(shape);
    if (detail::is_gain(name)) {
      t.fill(T{1});
    } else if (!detail::is_bias(name)) {
      Rng r = rng.child(name);
      for (auto& x : t.storage()) {
        double z;
        do {
          z = r.normal(0.0, 1.0);
        } while (std::abs(z) > 2.0);
        x = static_cast<T>(z * config.init_std);
      }
    }
    store.emplace(name, std::move(t));
  }
  return store;
}

template <class T>
struct Model {
  ModelConfig config;
  ParamStore<T> params;

  template <class U>
  Model<U> cast() const {
    return {config, cast_params<U>(params)};
  }
};

template <class T>
Model<T> make_model(const ModelConfig& config, std::uint64_t seed) {
  return {config, init_params<T>(config, Rng(seed).child("init"))};
}

// ---------------------------------------------------------------------------
// Input layouts
// ---------------------------------------------------------------------------

struct Sequence {
  std::vector<int> tokens;
  std::vector<int> segments;
  std::size_t size() const { return tokens.size(); }
};

/// [CLS] s [SEP], one segment.
inline Sequence text_sequence(const std::vector<int>& words) {
  Sequence s;
  s.tokens.reserve(words.size() + 2);
  s.tokens.push_back(Vocabulary::kCls);
  s.tokens.insert(s.tokens.end(), words.begin(), words.end());
  s.tokens.push_back(Vocabulary::kSep);
  s.segments.assign(s.tokens.size(), 0);
  return s;
}

/// Position of the entity slot in the entity-text layout.
inline constexpr std::size_t kEntityPosition = 1;

/// [CLS] e [SEP] s [SEP]; segment 0 for the entity part, 1 for the text.
/// Passing kMask as `entity_token` gives the zero-shot query layout.
inline Sequence entity_text_sequence(int entity_token, const std::vector<int>& words) {
  Sequence s;
  s.tokens = {Vocabulary::kCls, entity_token, Vocabulary::kSep};
  s.tokens.insert(s.tokens.end(), words.begin(), words.end());
  s.tokens.push_back(Vocabulary::kSep);
  s.segments.assign(3, 0);
  s.segments.resize(s.tokens.size(), 1);
  return s;
}

inline void validate_sequence(const Sequence& s, const ModelConfig& config) {
  if (s.tokens.size() != s.segments.size()) {
    throw std::invalid_argument("token and segment lengths differ");
  }
  if (s.tokens.empty()) throw std::invalid_argument("empty sequence");
  if (s.tokens.size() > config.max_seq_len) {
    throw std::invalid_argument("sequence length " + std::to_string(s.tokens.size()) +
                                " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (s.tokens[i] < 0 || static_cast<std::size_t>(s.tokens[i]) >= config.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(s.tokens[i]) + " at position " +
                              std::to_string(i) + " outside vocabulary of " +
                              std::to_string(config.vocab_size));
    }
    if (s.segments[i] != 0 && s.segments[i] != 1) {
      throw std::out_of_range("segment id at position " + std::to_string(i) + " must be 0 or 1");
    }
  }
}

// ---------------------------------------------------------------------------
// Encoder forward
// ---------------------------------------------------------------------------

/// Sequences packed row-wise into one [sum(len) x hidden] node.
template <class T>
struct EncodedBatch {
  ad::Var<T> hidden;
  std::vector<ad::Span> spans;

  std::size_t row(std::size_t sequence, std::size_t position) const {
    return spans.at(sequence).offset + position;
  }
  std::vector<std::size_t> cls_rows() const {
    std::vector<std::size_t> r;
    r.reserve(spans.size());
    for (const auto& s : spans) r.push_back(s.offset);
    return r;
  }
};

template <class T>
ad::Var<T> affine(ad::Tape<T>& tape, const ParamStore<T>& p, ad::Var<T> x, const std::string& w,
                  const std::string& b) {
  return ad::add_row(ad::matmul(x, tape.param(p, w)), tape.param(p, b));
}

template <class T>
EncodedBatch<T> encode_batch(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                             const std::vector<Sequence>& seqs,
                             ad::AttentionTrace<T>* trace = nullptr) {
  EncodedBatch<T> out;
  std::vector<std::size_t> tok, pos, seg;
  for (const auto& s : seqs) {
    validate_sequence(s, c);
    out.spans.push_back({tok.size(), s.size()});
    for (std::size_t i = 0; i < s.size(); ++i) {
      tok.push_back(static_cast<std::size_t>(s.tokens[i]));
      pos.push_back(i);
      seg.push_back(static_cast<std::size_t>(s.segments[i]));
    }
  }
  auto x = ad::add(ad::add(ad::rows(tape.param(p, "tok.emb"), std::move(tok)),
                           ad::rows(tape.param(p, "pos.emb"), std::move(pos))),
                   ad::rows(tape.param(p, "seg.emb"), std::move(seg)));
  x = ad::layer_norm(x, tape.param(p, "emb.ln.g"), tape.param(p, "emb.ln.b"));
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto name = [l](const char* n) { return block_param(l, n); };
    auto q = affine(tape, p, x, name("attn.wq"), name("attn.bq"));
    auto k = affine(tape, p, x, name("attn.wk"), name("attn.bk"));
    auto v = affine(tape, p, x, name("attn.wv"), name("attn.bv"));
    auto a = ad::multi_head_attention(q, k, v, out.spans, c.heads, trace);
    auto o = affine(tape, p, a, name("attn.wo"), name("attn.bo"));
    x = ad::layer_norm(ad::add(x, o), tape.param(p, name("ln1.g")), tape.param(p, name("ln1.b")));
    auto f = ad::gelu(affine(tape, p, x, name("ffn.w1"), name("ffn.b1")));
    f = affine(tape, p, f, name("ffn.w2"), name("ffn.b2"));
    x = ad::layer_norm(ad::add(x, f), tape.param(p, name("ln2.g")), tape.param(p, name("ln2.b")));
  }
  out.hidden = x;
  return out;
}

template <class T>
struct EncoderOutput {
  Tensor<T> hidden_states;  // [len x hidden]
  std::vector<T> cls_vector;
};

/// Single-sequence, graph-free forward pass.
template <class T>
EncoderOutput<T> encode(const Model<T>& m, const Sequence& s,
                        ad::AttentionTrace<T>* trace = nullptr) {
  ad::Tape<T> tape(false);
  auto b = encode_batch(tape, m.params, m.config, {s}, trace);
  EncoderOutput<T> out{b.hidden.value(), {}};
  auto r = out.hidden_states.row(0);
  out.cls_vector.assign(r.begin(), r.end());
  return out;
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

/// Shared MLM transform: dense, GELU, layer norm.
template <class T>
ad::Var<T> mlm_transform(ad::Tape<T>& tape, const ParamStore<T>& p, ad::Var<T> h) {
  auto t = ad::gelu(affine(tape, p, h, "mlm.dense.w", "mlm.dense.b"));
  return ad::layer_norm(t, tape.param(p, "mlm.ln.g"), tape.param(p, "mlm.ln.b"));
}

/// Vocabulary logits at the given packed rows; decoder tied to tok.emb.
template <class T>
ad::Var<T> mlm_logits(ad::Tape<T>& tape, const ParamStore<T>& p, ad::Var<T> hidden,
                      std::vector<std::size_t> positions) {
  auto t = mlm_transform(tape, p, ad::rows(hidden, std::move(positions)));
  return ad::add_row(ad::matmul_nt(t, tape.param(p, "tok.emb")), tape.param(p, "mlm.bias"));
}

/// Logits from concat(transform(h), g(e)) per masked row; `entity_vecs` has
/// one row per position.
template <class T>
ad::Var<T> hybrid_mlm_logits(ad::Tape<T>& tape, const ParamStore<T>& p, ad::Var<T> hidden,
                             std::vector<std::size_t> positions, ad::Var<T> entity_vecs) {
  const auto& dec = require_param(p, "hybrid.decoder");
  const std::size_t h = hidden.value().cols();
  if (entity_vecs.value().rows() != positions.size() ||
      h + entity_vecs.value().cols() != dec.cols()) {
    throw std::invalid_argument("hybrid_mlm_logits: entity vectors are " +
                                shape_string(entity_vecs.value().shape()) + " for " +
                                std::to_string(positions.size()) +
                                " positions; decoder expects width " + std::to_string(dec.cols()));
  }
  auto t = mlm_transform(tape, p, ad::rows(hidden, std::move(positions)));
  auto joint = ad::concat_cols(t, entity_vecs);
  return ad::add_row(ad::matmul_nt(joint, tape.param(p, "hybrid.decoder")),
                     tape.param(p, "hybrid.bias"));
}

/// g(e) for each entity index: rows of the entity table, or of the entity
/// block of tok.emb for the full variant.
template <class T>
ad::Var<T> entity_rows(ad::Tape<T>& tape, const ParamStore<T>& p, const ModelConfig& c,
                       std::vector<std::size_t> entities) {
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (entities[i] >= c.entity_count) {
      throw std::out_of_range("entity index " + std::to_string(entities[i]) + " outside " +
                              std::to_string(c.entity_count) + " entities");
    }
  }
  if (c.variant == Variant::full) {
    for (auto& e : entities) e += c.entity_base();
    return ad::rows(tape.param(p, "tok.emb"), std::move(entities));
  }
  return ad::rows(tape.param(p, "entity.table"), std::move(entities));
}

/// Name of the tensor holding g(.) and the row range it occupies.
struct EntityStorage {
  std::string tensor;
  std::size_t first_row = 0;
  std::size_t rows = 0;
};

inline EntityStorage entity_storage(const ModelConfig& c) {
  if (c.variant == Variant::full) return {"tok.emb", c.entity_base(), c.entity_count};
  return {"entity.table", 0, c.entity_count};
}

template <class T>
std::vector<T> embed_entity(const Model<T>& m, std::size_t e) {
  if (e >= m.config.entity_count) {
    throw std::out_of_range("entity index " + std::to_string(e) + " outside " +
                            std::to_string(m.config.entity_count) + " entities");
  }
  const auto where = entity_storage(m.config);
  auto r = require_param(m.params, where.tensor).row(where.first_row + e);
  return {r.begin(), r.end()};
}

/// Cosine of two encodings; the injectable form of s(e, s).
template <class T>
T compatibility(std::span<const T> entity_vec, std::span<const T> text_vec) {
  return cosine<T>(entity_vec, text_vec);
}

template <class T>
T compatibility(const Model<T>& m, std::size_t e, const std::vector<int>& words) {
  const auto g = embed_entity(m, e);
  const auto f = encode(m, text_sequence(words)).cls_vector;
  return compatibility<T>(g, f);
}

/// Binary head on CLS rows: [B x 1] logits.
template <class T>
ad::Var<T> classifier_logits(ad::Tape<T>& tape, const ParamStore<T>& p, ad::Var<T> cls) {
  return ad::add_row(ad::matmul(cls, tape.param(p, "cls.w")), tape.param(p, "cls.b"));
}

}  // namespace docent
