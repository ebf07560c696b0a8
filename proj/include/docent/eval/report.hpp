#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "docent/eval/metrics.hpp"
#include "docent/eval/tags.hpp"
#include "docent/text/io.hpp"

namespace docent::eval {

struct ReportEntry {
  std::string metric;
  std::optional<std::size_t> k;
  double value = 0.0;
  std::size_t n = 0;
};

inline nlohmann::json to_json(const ReportEntry& e) {
  nlohmann::json j{{"metric", e.metric}, {"value", e.value}, {"n", e.n}};
  j["k"] = e.k ? nlohmann::json(*e.k) : nlohmann::json(nullptr);
  return j;
}

class Report {
 public:
  void add(std::string metric, std::optional<std::size_t> k, const MeanMetric& m) {
    entries_.push_back({std::move(metric), k, m.value, m.n});
  }

  void add_tags(const std::string& prefix, const TagEvaluation& t) {
    add(prefix + "map", std::nullopt, t.map);
    add(prefix + "auc", std::nullopt, t.auc);
    for (const auto& [k, m] : t.precision) add(prefix + "precision", k, m);
    for (const auto& [k, m] : t.ndcg) add(prefix + "ndcg", k, m);
  }

  const std::vector<ReportEntry>& entries() const { return entries_; }

  const ReportEntry* find(const std::string& metric, std::optional<std::size_t> k = std::nullopt) const {
    for (const auto& e : entries_) if (e.metric == metric && e.k == k) return &e;
    return nullptr;
  }

  nlohmann::json json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries_) arr.push_back(to_json(e));
    return arr;
  }

  void write(const std::string& path) const {
    auto out = io::open_out(path);
    out << json().dump(2) << '\n';
  }

 private:
  std::vector<ReportEntry> entries_;
};

}  // namespace docent::eval
