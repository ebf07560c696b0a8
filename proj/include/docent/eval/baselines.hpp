#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "docent/eval/metrics.hpp"
#include "docent/finetune/tag_votes.hpp"

namespace docent::eval {

/// Per-entity documents (all sentences concatenated) scored with raw term
/// frequency and idf = max(0, ln(N / (1 + df))).
class TfIdf {
 public:
  using Doc = std::vector<std::vector<std::string>>;

  TfIdf(std::vector<std::string> entity_ids, const std::map<std::string, Doc>& docs)
      : ids_(std::move(entity_ids)) {
    for (const auto& id : ids_) {
      std::unordered_map<std::string, double> tf;
      if (auto it = docs.find(id); it != docs.end()) {
        for (const auto& sentence : it->second) {
          for (const auto& w : sentence) tf[w] += 1.0;
        }
      }
      for (const auto& [w, _] : tf) df_[w] += 1;
      tf_.push_back(std::move(tf));
    }
    for (const auto& tf : tf_) {
      double ss = 0.0;
      for (const auto& [w, n] : tf) ss += (n * idf(w)) * (n * idf(w));
      norms_.push_back(std::sqrt(ss));
    }
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  double idf(const std::string& word) const {
    auto it = df_.find(word);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    return std::max(0.0, std::log(static_cast<double>(ids_.size()) / (1.0 + df)));
  }

  double tf(std::size_t entity, const std::string& word) const {
    auto it = tf_.at(entity).find(word);
    return it == tf_.at(entity).end() ? 0.0 : it->second;
  }

  /// Sum over the tag's words of tf * idf.
  double tag_score(std::size_t entity, const std::vector<std::string>& tag_words) const {
    double s = 0.0;
    for (const auto& w : tag_words) s += tf(entity, w) * idf(w);
    return s;
  }

  /// Cosine between tf-idf vectors of the query and each entity document;
  /// documents or queries with a zero vector score 0.
  RankedList rank_query(const std::vector<std::string>& query_words) const {
    std::unordered_map<std::string, double> q;
    for (const auto& w : query_words) q[w] += 1.0;
    double qn = 0.0;
    for (const auto& [w, n] : q) qn += (n * idf(w)) * (n * idf(w));
    qn = std::sqrt(qn);
    std::vector<double> scores(ids_.size(), 0.0);
    for (std::size_t e = 0; e < ids_.size(); ++e) {
      if (qn == 0.0 || norms_[e] == 0.0) continue;
      double dotp = 0.0;
      for (const auto& [w, n] : q) {
        const double wi = idf(w);
        dotp += (n * wi) * (tf(e, w) * wi);
      }
      scores[e] = dotp / (qn * norms_[e]);
    }
    return RankedList::sorted(ids_, std::move(scores));
  }

 private:
  std::vector<std::string> ids_;
  std::vector<std::unordered_map<std::string, double>> tf_;
  std::unordered_map<std::string, std::size_t> df_;
  std::vector<double> norms_;
};

/// Tags by total votes over `entities`, descending, ties by tag; the same
/// list serves every entity.
inline std::vector<std::string> top_tags_baseline(const TagVotes& votes,
                                                  const std::vector<std::string>& entities) {
  std::map<std::string, long long> total;
  for (const auto& t : votes.tags()) total[t] = 0;
  for (const auto& e : entities) {
    for (const auto& [t, n] : votes.of(e)) total[t] += n;
  }
  std::vector<std::pair<std::string, long long>> order(total.begin(), total.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (const auto& [t, _] : order) out.push_back(t);
  return out;
}

}  // namespace docent::eval
