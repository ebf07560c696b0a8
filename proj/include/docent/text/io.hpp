#pragma once

#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "docent/finetune/tag_votes.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/text/corpus.hpp"
#include "docent/text/synthetic.hpp"
#include "docent/text/vocabulary.hpp"

namespace docent::io {

using json = nlohmann::json;

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

/// Calls `fn` for each non-blank line parsed as JSON; errors carry the line number.
inline void for_each_json_line(const std::string& path,
                               const std::function<void(const json&)>& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// ---- reviews: {"entity_id", "entity_name", "text"} -------------------------

inline std::vector<RawReview> read_reviews(const std::string& path) {
  std::vector<RawReview> out;
  for_each_json_line(path, [&](const json& j) {
    out.push_back({j.at("entity_id").get<std::string>(),
                   j.value("entity_name", std::string{}), j.at("text").get<std::string>()});
  });
  return out;
}

inline void write_reviews(const std::string& path, const std::vector<RawReview>& reviews) {
  auto out = open_out(path);
  for (const auto& r : reviews) {
    out << json{{"entity_id", r.entity_id}, {"entity_name", r.entity_name}, {"text", r.text}}.dump()
        << '\n';
  }
}

// ---- corpus: {"entity_id", "tokens": [int]} ---------------------------------

inline std::vector<CorpusExample> read_corpus(const std::string& path) {
  std::vector<CorpusExample> out;
  for_each_json_line(path, [&](const json& j) {
    CorpusExample ex{j.at("entity_id").get<std::string>(), j.at("tokens").get<std::vector<int>>()};
    if (ex.tokens.empty()) throw DataError("empty token list for entity '" + ex.entity_id + "'");
    out.push_back(std::move(ex));
  });
  return out;
}

inline void write_corpus(const std::string& path, const std::vector<CorpusExample>& corpus) {
  auto out = open_out(path);
  for (const auto& ex : corpus) {
    out << json{{"entity_id", ex.entity_id}, {"tokens", ex.tokens}}.dump() << '\n';
  }
}

/// Checks every token id against the vocabulary's word block.
inline void validate_corpus(const std::vector<CorpusExample>& corpus, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!vocab.has_entity(corpus[i].entity_id)) {
      throw DataError("corpus line " + std::to_string(i + 1) + ": entity '" +
                      corpus[i].entity_id + "' missing from vocabulary");
    }
    for (const int t : corpus[i].tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab.word_block_size()) {
        throw DataError("corpus line " + std::to_string(i + 1) + ": token id " +
                        std::to_string(t) + " is not a word or special id");
      }
    }
  }
}

// ---- vocabulary TSV: token \t id \t kind ------------------------------------
// Entity rows carry the raw entity id in the token column.

inline void write_vocab(const std::string& path, const Vocabulary& vocab) {
  auto out = open_out(path);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const int i = static_cast<int>(id);
    const TokenKind k = vocab.kind(i);
    const std::string& tok = k == TokenKind::entity ? vocab.entity_of_token(i) : vocab.token(i);
    out << tok << '\t' << id << '\t' << to_string(k) << '\n';
  }
}

inline Vocabulary read_vocab(const std::string& path) {
  auto in = open_in(path);
  Vocabulary vocab;
  std::vector<std::string> entities;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tok, id_str, kind;
    if (!std::getline(fields, tok, '\t') || !std::getline(fields, id_str, '\t') ||
        !std::getline(fields, kind, '\t')) {
      throw DataError(path + ": malformed vocabulary row '" + line + "'");
    }
    const std::size_t id = std::stoul(id_str);
    if (id != expected) throw DataError(path + ": ids must be contiguous from 0");
    ++expected;
    if (kind == "special") {
      if (id >= static_cast<std::size_t>(Vocabulary::kSpecialCount) ||
          Vocabulary::special_names()[id] != tok) {
        throw DataError(path + ": unexpected special token '" + tok + "'");
      }
    } else if (kind == "word") {
      if (!entities.empty()) throw DataError(path + ": word after entity block");
      vocab.add_word(tok);
    } else if (kind == "entity") {
      entities.push_back(tok);
    } else {
      throw DataError(path + ": unknown token kind '" + kind + "'");
    }
  }
  vocab.add_entities(entities);
  return vocab;
}

// ---- tag votes: {"entity_id", "tag", "votes"} -------------------------------

inline TagVotes read_votes(const std::string& path) {
  TagVotes votes;
  for_each_json_line(path, [&](const json& j) {
    const int n = j.at("votes").get<int>();
    const auto tag = j.at("tag").get<std::string>();
    if (n < 1) {
      votes.add_tag(tag);
      return;
    }
    votes.set(j.at("entity_id").get<std::string>(), tag, n);
  });
  return votes;
}

/// Writes stored pairs; tags without any votes get a zero-vote row so the
/// tag vocabulary survives a round trip.
inline void write_votes(const std::string& path, const TagVotes& votes) {
  auto out = open_out(path);
  std::set<std::string> voted;
  for (const auto& e : votes.entities()) {
    for (const auto& [tag, n] : votes.of(e)) {
      voted.insert(tag);
      out << json{{"entity_id", e}, {"tag", tag}, {"votes", n}}.dump() << '\n';
    }
  }
  for (const auto& tag : votes.tags()) {
    if (!voted.count(tag)) out << json{{"entity_id", ""}, {"tag", tag}, {"votes", 0}}.dump() << '\n';
  }
}

// ---- queries: {"query", "relevant_entity_ids": [str]} ----------------------

inline std::vector<SyntheticQuery> read_queries(const std::string& path) {
  std::vector<SyntheticQuery> out;
  for_each_json_line(path, [&](const json& j) {
    out.push_back({j.at("query").get<std::string>(),
                   j.at("relevant_entity_ids").get<std::vector<std::string>>()});
  });
  return out;
}

inline void write_queries(const std::string& path, const std::vector<SyntheticQuery>& queries) {
  auto out = open_out(path);
  for (const auto& q : queries) {
    out << json{{"query", q.text}, {"relevant_entity_ids", q.relevant_entity_ids}}.dump() << '\n';
  }
}

}  // namespace docent::io
