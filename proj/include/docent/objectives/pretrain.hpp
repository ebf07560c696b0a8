#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "docent/encoder/model.hpp"
#include "docent/numerics/adam.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/objectives/batch.hpp"
#include "docent/objectives/losses.hpp"

namespace docent {

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double loss_entity = 0.0;
  double loss_mlm = 0.0;
};

inline nlohmann::json to_json(const StepMetrics& m) {
  return {{"step", m.step}, {"loss", m.loss}, {"loss_entity", m.loss_entity}, {"loss_mlm", m.loss_mlm}};
}

struct PretrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(std::size_t step, const Model<float>&)> on_checkpoint;
  std::function<void(const std::string&)> on_warning;
};

/// Endless shuffled pass over corpus indices, reshuffled every epoch.
class ExampleStream {
 public:
  ExampleStream(std::size_t n, Rng rng) : order_(n), rng_(std::move(rng)) {
    if (n == 0) throw std::invalid_argument("empty corpus");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    cursor_ = 0;
    ++epoch_;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Mini-batch Adam on the variant's loss. Returns the per-step trace; the
/// model is updated in place.
inline std::vector<StepMetrics> pretrain(Model<float>& model, const std::vector<CorpusExample>& corpus,
                                         const Vocabulary& vocab, const TrainingConfig& config,
                                         const PretrainHooks& hooks = {}) {
  config.validate();
  model.config.validate();
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  for (const auto& ex : corpus) {
    if (!vocab.has_entity(ex.entity_id)) {
      throw DataError("corpus entity '" + ex.entity_id + "' not in vocabulary");
    }
  }
  const Variant variant = model.config.variant;
  if (variant == Variant::dual && config.batch_size == 1 && hooks.on_warning) {
    hooks.on_warning("batch size 1 leaves a single in-batch candidate; the dual loss is identically 0");
  }
  Rng root(config.seed);
  ExampleStream stream(corpus.size(), root.child("order"));
  Rng mask_rng = root.child("masking");
  AdamState<float> adam{config.adam, 0, {}, {}};

  std::vector<StepMetrics> trace;
  trace.reserve(config.steps);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto ids = stream.next(config.batch_size);
    std::vector<const CorpusExample*> rows;
    for (const auto i : ids) rows.push_back(&corpus[i]);
    const MaskedBatch batch = make_batch(variant, rows, vocab, config, mask_rng);

    ad::Tape<float> tape;
    const auto parts = variant_loss(tape, model.params, model.config, batch, config);
    const double loss = static_cast<double>(parts.total.item());
    if (!std::isfinite(loss)) {
      std::string which;
      for (const auto i : ids) which += (which.empty() ? "" : ",") + std::to_string(i);
      throw NumericError("non-finite loss at step " + std::to_string(step) +
                         " (batch example ids " + which + ")");
    }
    tape.backward(parts.total);
    const auto grads = tape.gradients(model.params);
    adam.config.lr = config.adam.lr;
    if (config.warmup_steps > 0 && step <= config.warmup_steps) {
      adam.config.lr *= static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    adam_step(model.params, grads, adam);

    StepMetrics m{step, loss, parts.entity, parts.mlm};
    trace.push_back(m);
    if (hooks.on_step) hooks.on_step(m);
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(step, model);
    }
  }
  return trace;
}

}  // namespace docent
