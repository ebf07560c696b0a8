#pragma once

#include <map>
#include <string>
#include <vector>

#include "docent/eval/metrics.hpp"
#include "docent/finetune/tag_votes.hpp"

namespace docent::eval {

/// Tag-prediction quality over a score matrix: for each entity, candidate
/// tags are ranked by score; labels are l(m, t) and graded gains r(m, t).
struct TagEvaluation {
  MeanMetric map;
  MeanMetric auc;  // macro mean over entities with both classes present
  std::map<std::size_t, MeanMetric> precision;
  std::map<std::size_t, MeanMetric> ndcg;
};

/// `scores[e][j]` scores tag `tags[j]` for entity `entities[e]`.
inline TagEvaluation evaluate_tags(const std::vector<std::string>& entities,
                                   const std::vector<std::string>& tags,
                                   const std::vector<std::vector<double>>& scores,
                                   const TagVotes& votes, const EvalConfig& config) {
  config.validate();
  if (scores.size() != entities.size()) throw std::invalid_argument("evaluate_tags: one score row per entity");
  std::vector<Metric> ap, auc;
  std::map<std::size_t, std::vector<Metric>> prec, ndcg;
  for (std::size_t e = 0; e < entities.size(); ++e) {
    if (scores[e].size() != tags.size()) throw std::invalid_argument("evaluate_tags: score row length");
    const auto ranked = RankedList::sorted(tags, scores[e]);
    std::vector<int> labels, labels_by_tag;
    std::vector<double> gains;
    for (const auto& t : ranked.ids) {
      const int v = votes.votes(entities[e], t);
      labels.push_back(binarize(v, config.threshold));
      gains.push_back(relevance(v));
    }
    for (const auto& t : tags) labels_by_tag.push_back(binarize(votes.votes(entities[e], t), config.threshold));
    ap.push_back(average_precision(labels));
    auc.push_back(roc_auc(scores[e], labels_by_tag));
    for (const auto k : config.k_values) {
      prec[k].push_back(precision_at_k(labels, k));
      ndcg[k].push_back(ndcg_at_k(gains, k));
    }
  }
  TagEvaluation out;
  out.map = mean_of(ap);
  out.auc = mean_of(auc);
  for (auto& [k, v] : prec) out.precision[k] = mean_of(v);
  for (auto& [k, v] : ndcg) out.ndcg[k] = mean_of(v);
  return out;
}

}  // namespace docent::eval
