#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace docent::eval {

struct EvalConfig {
  int threshold = 2;
  std::vector<std::size_t> k_values{1, 5, 10, 20};
  std::vector<std::size_t> recall_k{50, 100};

  void validate() const {
    if (threshold < 0) throw std::invalid_argument("binarization threshold must be >= 0");
    for (const auto k : k_values) if (k == 0) throw std::invalid_argument("k values must be positive");
    for (const auto k : recall_k) if (k == 0) throw std::invalid_argument("k values must be positive");
  }
};

/// l(m, t): 1 iff votes > T (strict).
inline int binarize(int votes, int threshold) { return votes > threshold ? 1 : 0; }

/// r(m, t) is the raw vote count.
inline double relevance(int votes) { return static_cast<double>(votes); }

/// A metric value for one list. `defined` is false when the metric has no
/// meaning for the input (no positives, single class); such values are left
/// out of means. `flagged` marks values computed on degenerate inputs.
struct Metric {
  double value = 0.0;
  bool defined = true;
  bool flagged = false;
};

struct MeanMetric {
  double value = 0.0;
  std::size_t n = 0;
  std::size_t skipped = 0;
};

inline MeanMetric mean_of(const std::vector<Metric>& values) {
  MeanMetric m;
  for (const auto& v : values) {
    if (!v.defined) {
      ++m.skipped;
      continue;
    }
    m.value += v.value;
    ++m.n;
  }
  if (m.n) m.value /= static_cast<double>(m.n);
  return m;
}

/// Items with scores, ordered by descending score then ascending id.
struct RankedList {
  std::vector<std::string> ids;
  std::vector<double> scores;

  static RankedList sorted(std::vector<std::string> ids, std::vector<double> scores) {
    if (ids.size() != scores.size()) throw std::invalid_argument("ids and scores differ in length");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return ids[a] < ids[b];
    });
    RankedList r;
    for (const auto i : order) {
      r.ids.push_back(ids[i]);
      r.scores.push_back(scores[i]);
    }
    for (std::size_t i = 1; i < r.ids.size(); ++i) {
      if (r.ids[i] == r.ids[i - 1]) throw std::invalid_argument("duplicate id '" + r.ids[i] + "'");
    }
    return r;
  }

  std::size_t size() const { return ids.size(); }

  /// 1-based rank of `id`, 0 when absent.
  std::size_t rank_of(const std::string& id) const {
    for (std::size_t i = 0; i < ids.size(); ++i) if (ids[i] == id) return i + 1;
    return 0;
  }

  /// Labels in rank order; `relevant` decides membership.
  template <class Pred>
  std::vector<int> labels(Pred relevant) const {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(relevant(id) ? 1 : 0);
    return out;
  }
};

/// Positives among the top k over min(k, n); flagged when n < k.
inline Metric precision_at_k(std::span<const int> ranked_labels, std::size_t k) {
  if (k == 0) throw std::invalid_argument("precision_at_k: k must be >= 1");
  const std::size_t n = std::min(k, ranked_labels.size());
  Metric m;
  m.flagged = ranked_labels.size() < k;
  if (n == 0) {
    m.defined = false;
    return m;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += ranked_labels[i] != 0;
  m.value = static_cast<double>(hits) / static_cast<double>(n);
  return m;
}

/// Gain = raw relevance, discount 1 / log2(rank + 1), normalised by the ideal
/// ordering of the same relevances.
inline Metric ndcg_at_k(std::span<const double> ranked_relevances, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  for (const double r : ranked_relevances) {
    if (!(r >= 0.0)) throw std::invalid_argument("ndcg_at_k: relevances must be >= 0");
  }
  auto dcg = [k](std::span<const double> rel) {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(k, rel.size()); ++i) s += rel[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
  };
  std::vector<double> ideal(ranked_relevances.begin(), ranked_relevances.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal);
  Metric m;
  if (!(idcg > 0.0)) {
    // all relevances zero: defined as 0 and flagged
    m.flagged = true;
    return m;
  }
  m.value = dcg(ranked_relevances) / idcg;
  return m;
}

/// Mean of precision@rank over the ranks of positives; undefined without positives.
inline Metric average_precision(std::span<const int> ranked_labels) {
  Metric m;
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
    if (!ranked_labels[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  if (hits == 0) {
    m.defined = false;
    return m;
  }
  m.value = sum / static_cast<double>(hits);
  return m;
}

inline MeanMetric mean_average_precision(const std::vector<std::vector<int>>& ranked_label_lists) {
  std::vector<Metric> ap;
  for (const auto& l : ranked_label_lists) ap.push_back(average_precision(l));
  return mean_of(ap);
}

/// P(random positive outscores random negative), ties count 1/2. Computed
/// from midranks; undefined when only one class is present.
inline Metric roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        pos_rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  Metric m;
  if (pos == 0 || neg == 0) {
    m.defined = false;
    m.flagged = true;
    return m;
  }
  const double p = static_cast<double>(pos);
  m.value = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
  return m;
}

/// 1 / rank of the first relevant item, 0 if none is ranked; undefined for
/// an empty relevant set.
inline Metric reciprocal_rank(const RankedList& ranked, const std::set<std::string>& relevant) {
  Metric m;
  if (relevant.empty()) {
    m.defined = false;
    m.flagged = true;
    return m;
  }
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.count(ranked.ids[i])) {
      m.value = 1.0 / static_cast<double>(i + 1);
      return m;
    }
  }
  return m;
}

inline MeanMetric mrr(const std::vector<RankedList>& ranked,
                      const std::vector<std::set<std::string>>& relevant) {
  if (ranked.size() != relevant.size()) throw std::invalid_argument("mrr: length mismatch");
  std::vector<Metric> rr;
  for (std::size_t i = 0; i < ranked.size(); ++i) rr.push_back(reciprocal_rank(ranked[i], relevant[i]));
  return mean_of(rr);
}

/// |top-k ∩ relevant| / |relevant|; undefined for an empty relevant set.
inline Metric recall_at_k(const RankedList& ranked, const std::set<std::string>& relevant,
                          std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be >= 1");
  Metric m;
  if (relevant.empty()) {
    m.defined = false;
    m.flagged = true;
    return m;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hits += relevant.count(ranked.ids[i]);
  m.value = static_cast<double>(hits) / static_cast<double>(relevant.size());
  return m;
}

}  // namespace docent::eval
