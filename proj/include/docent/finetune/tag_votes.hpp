#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace docent {

/// Sparse #(entity, tag) vote counts plus the tag vocabulary. Stored counts
/// are >= 1; an absent pair means zero votes.
class TagVotes {
 public:
  /// Registers a tag even if nobody voted for it yet.
  void add_tag(const std::string& tag) {
    if (tag.empty()) throw std::invalid_argument("empty tag");
    if (tag_set_.insert(tag).second) {
      tags_.insert(std::lower_bound(tags_.begin(), tags_.end(), tag), tag);
    }
  }

  void set(const std::string& entity, const std::string& tag, int votes) {
    if (votes < 1) {
      throw std::invalid_argument("stored vote counts must be >= 1 (" + entity + ", " + tag + ")");
    }
    add_tag(tag);
    by_entity_[entity][tag] = votes;
  }

  int votes(const std::string& entity, const std::string& tag) const {
    auto e = by_entity_.find(entity);
    if (e == by_entity_.end()) return 0;
    auto t = e->second.find(tag);
    return t == e->second.end() ? 0 : t->second;
  }

  /// Tags in lexicographic order, independent of insertion history.
  const std::vector<std::string>& tags() const noexcept { return tags_; }

  bool has_tag(const std::string& tag) const { return tag_set_.count(tag) != 0; }

  std::vector<std::string> entities() const {
    std::vector<std::string> out;
    for (const auto& [e, _] : by_entity_) out.push_back(e);
    return out;
  }

  /// Stored (tag -> votes) pairs for one entity; empty when unknown.
  const std::map<std::string, int>& of(const std::string& entity) const {
    static const std::map<std::string, int> none;
    auto e = by_entity_.find(entity);
    return e == by_entity_.end() ? none : e->second;
  }

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& [e, m] : by_entity_) n += m.size();
    return n;
  }

 private:
  std::map<std::string, std::map<std::string, int>> by_entity_;
  std::vector<std::string> tags_;
  std::set<std::string> tag_set_;
};

}  // namespace docent
