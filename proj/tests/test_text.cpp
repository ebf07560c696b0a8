#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "docent/text/io.hpp"
#include "docent/text/preprocess.hpp"
#include "docent/text/synthetic.hpp"
#include "docent/text/tokenizer.hpp"
#include "docent/text/vocabulary.hpp"
#include "test_util.hpp"

namespace docent {
namespace {

using Words = std::vector<std::vector<std::string>>;

Vocabulary small_vocab() {
  return build_vocab(Words{{"surreal", "cerebral", "japan"}, {"surreal", "heist"}}, 1);
}

TEST(Tokenize, EmptyAndCaseFolding) {
  const auto v = build_vocab(Words{{"the"}}, 1);
  EXPECT_TRUE(tokenize("", v).empty());
  const auto ids = tokenize("The THE the", v);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], ids[1]);
  EXPECT_EQ(ids[1], ids[2]);
  EXPECT_EQ(ids[0], *v.lookup("the"));
}

TEST(Tokenize, LooksUpInOrderAndMapsUnknownToUnk) {
  const auto v = small_vocab();
  const std::vector<int> expected{*v.lookup("surreal"), *v.lookup("cerebral"), *v.lookup("japan")};
  EXPECT_EQ(tokenize("surreal cerebral japan", v), expected);
  EXPECT_EQ(tokenize("Surreal, cerebral... JAPAN!", v), expected);
  EXPECT_EQ(tokenize("zebra", v), std::vector<int>{Vocabulary::kUnk});
}

TEST(Tokenize, ApostrophesAndSpecialLiterals) {
  EXPECT_EQ(split_words("Don't  stop"), (std::vector<std::string>{"dont", "stop"}));
  EXPECT_EQ(split_words("a [UNK] b"), (std::vector<std::string>{"a", "[UNK]", "b"}));
  EXPECT_EQ(split_words("well-made"), (std::vector<std::string>{"well", "made"}));
}

TEST(Vocabulary, SpecialsHaveFixedIds) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(Vocabulary::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocabulary::kCls), "[CLS]");
  EXPECT_EQ(v.token(Vocabulary::kSep), "[SEP]");
  EXPECT_EQ(v.token(Vocabulary::kMask), "[MASK]");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "[UNK]");
}

TEST(BuildVocab, DegenerateCorpora) {
  const auto one = build_vocab(Words{{"x", "x", "x"}}, 1);
  EXPECT_EQ(one.size(), 6u);
  EXPECT_EQ(*one.lookup("x"), 5);
  const auto none = build_vocab(Words{{"a", "b"}, {"a"}}, 10);
  EXPECT_EQ(none.size(), 5u);
}

TEST(BuildVocab, MatchesIndependentFrequencySort) {
  const Words docs{{"b", "a", "c", "a"}, {"d", "b", "a"}, {"c", "e", "b", "e"}};
  // a:3 b:3 c:2 e:2 d:1 -> ties broken lexically
  const std::vector<std::string> expected{"a", "b", "c", "e", "d"};
  const auto v = build_vocab(docs, 1);
  ASSERT_EQ(v.size(), 5u + expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(v.token(static_cast<int>(5 + i)), expected[i]);
  }
  const auto v2 = build_vocab(docs, 2);
  EXPECT_EQ(v2.size(), 9u);
  EXPECT_FALSE(v2.lookup("d").has_value());
}

TEST(ExtendWithEntities, ContiguousBlockAfterWords) {
  Vocabulary v;
  for (int i = 0; i < 95; ++i) v.add_word("w" + std::to_string(i));
  ASSERT_EQ(v.size(), 100u);
  const auto same = extend_with_entities(v, {});
  EXPECT_EQ(same, v);
  const auto ext = extend_with_entities(v, {"m1", "m2", "m3"});
  EXPECT_EQ(ext.entity_token("m1"), 100);
  EXPECT_EQ(ext.entity_token("m2"), 101);
  EXPECT_EQ(ext.entity_token("m3"), 102);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ext.token(i), v.token(i));
  for (const auto& e : ext.entity_ids()) EXPECT_EQ(ext.entity_of_token(ext.entity_token(e)), e);
  EXPECT_THROW(extend_with_entities(v, {"m1", "m1"}), std::invalid_argument);
}

TEST(Vocabulary, EntityBlockDisjointAndRoundTrips) {
  const auto world = generate_synthetic({.entities = 12, .attribute_vocab = 30,
                                         .attributes_per_entity = 4, .sentences_per_entity = 5});
  const auto v = world_vocabulary(world);
  for (std::size_t id = 0; id < v.size(); ++id) {
    const int i = static_cast<int>(id);
    EXPECT_EQ(*v.lookup(detokenize({i}, v)), i);
    EXPECT_NE(v.is_entity(i), v.is_word(i) || v.is_special(i));
  }
  for (const auto& e : world.entity_ids) {
    EXPECT_GE(v.entity_token(e), static_cast<int>(v.word_block_size()));
  }
  EXPECT_THROW(v.entity_token("nope"), std::out_of_range);
  Vocabulary copy = v;
  EXPECT_THROW(copy.add_word("late"), std::logic_error);
}

// ---- preprocess ----------------------------------------------------------------

std::vector<RawReview> reviews_for(const std::string& id, const std::string& name, int n,
                                   const std::string& stem = "a perfectly ordinary review number") {
  std::vector<RawReview> out;
  for (int i = 0; i < n; ++i) out.push_back({id, name, stem + " " + std::to_string(i)});
  return out;
}

TEST(Preprocess, DropsEntityWithFourReviews) {
  auto reviews = reviews_for("m4", "Four", 4);
  const auto five = reviews_for("m5", "Five", 5);
  reviews.insert(reviews.end(), five.begin(), five.end());
  const auto out = preprocess(reviews);
  const auto ids = entity_ids_of(out);
  EXPECT_EQ(ids, (std::vector<std::string>{"m5"}));
}

TEST(Preprocess, DropsShortReviewsBeforeCounting) {
  auto reviews = reviews_for("m", "Movie", 5);
  reviews.push_back({"m", "Movie", "great movie"});
  auto out = preprocess(reviews);
  EXPECT_EQ(out.size(), 5u);
  for (const auto& s : out) EXPECT_NE(s.words, (std::vector<std::string>{"great", "movie"}));
  // four long reviews plus one short one leave only four: the entity goes.
  reviews = reviews_for("m", "Movie", 4);
  reviews.push_back({"m", "Movie", "great movie"});
  EXPECT_TRUE(preprocess(reviews).empty());
}

TEST(Preprocess, DuplicatesCountOnce) {
  auto reviews = reviews_for("m", "Movie", 4);
  reviews.push_back(reviews.front());
  EXPECT_TRUE(preprocess(reviews).empty());
}

TEST(Preprocess, ScrubsTitleCaseInsensitively) {
  auto reviews = reviews_for("m", "Spirited Away", 4);
  reviews.push_back({"m", "Spirited Away", "I loved SPIRITED away so much. spirited was fun"});
  const auto out = preprocess(reviews);
  bool found = false;
  for (const auto& s : out) {
    if (s.review != 4) continue;
    if (s.words.front() == "i") {
      EXPECT_EQ(s.words, (std::vector<std::string>{"i", "loved", "[UNK]", "[UNK]", "so", "much"}));
      found = true;
    } else {
      // a lone "spirited" is not the full name
      EXPECT_EQ(s.words, (std::vector<std::string>{"spirited", "was", "fun"}));
    }
  }
  EXPECT_TRUE(found);
}

TEST(Preprocess, SplitsSentencesAndTruncates) {
  PreprocessOptions opt;
  opt.max_seq_len = 10;
  auto reviews = reviews_for("m", "", 4);
  std::string longer;
  for (int i = 0; i < 20; ++i) longer += "w" + std::to_string(i) + " ";
  reviews.push_back({"m", "", "one two? three! " + longer + "."});
  const auto out = preprocess(reviews, opt);
  std::vector<std::vector<std::string>> got;
  for (const auto& s : out) {
    if (s.review == 4) got.push_back(s.words);
  }
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], (std::vector<std::string>{"one", "two"}));
  EXPECT_EQ(got[1], (std::vector<std::string>{"three"}));
  EXPECT_EQ(got[2].size(), 6u);
  EXPECT_EQ(got[2].back(), "w5");
}

TEST(Preprocess, IdempotentOnRenderedOutput) {
  std::vector<RawReview> reviews;
  const auto world = generate_synthetic({.entities = 6, .attribute_vocab = 20,
                                         .attributes_per_entity = 3, .sentences_per_entity = 8});
  reviews = world.reviews();
  reviews.push_back({world.entity_ids[0], world.entity_names[0],
                     "Title 0 is what I watched. Then title 0 again!"});
  std::map<std::string, std::string> names;
  for (std::size_t i = 0; i < world.entity_ids.size(); ++i) names[world.entity_ids[i]] = world.entity_names[i];
  const auto once = preprocess(reviews);
  const auto twice = preprocess(render_reviews(once, names));
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_EQ(once[i].entity_id, twice[i].entity_id);
    EXPECT_EQ(once[i].words, twice[i].words);
  }
}

TEST(EncodeCorpus, NoEntityTokensInside) {
  const auto world = generate_synthetic({.entities = 5, .attribute_vocab = 10,
                                         .attributes_per_entity = 2, .sentences_per_entity = 3});
  const auto vocab = world_vocabulary(world);
  const auto corpus = encode_corpus(world.sentences, vocab);
  for (const auto& ex : corpus) {
    ASSERT_FALSE(ex.tokens.empty());
    for (const int t : ex.tokens) EXPECT_FALSE(vocab.is_entity(t));
  }
}

// ---- synthetic world -----------------------------------------------------------------

TEST(Synthetic, DeterministicForSeed) {
  const SyntheticWorldSpec spec{.entities = 20, .attribute_vocab = 40, .attributes_per_entity = 5,
                                .sentences_per_entity = 6, .seed = 99};
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  ASSERT_EQ(a.sentences.size(), b.sentences.size());
  for (std::size_t i = 0; i < a.sentences.size(); ++i) EXPECT_EQ(a.sentences[i].words, b.sentences[i].words);
  EXPECT_EQ(a.attributes, b.attributes);
  SyntheticWorldSpec other = spec;
  other.seed = 100;
  EXPECT_NE(generate_synthetic(other).attributes, a.attributes);
}

TEST(Synthetic, NoiseFreeSingleAttribute) {
  const auto w = generate_synthetic({.entities = 8, .attribute_vocab = 8, .attributes_per_entity = 1,
                                     .sentences_per_entity = 4, .noise_ratio = 0.0});
  for (const auto& s : w.sentences) {
    const auto e = static_cast<std::size_t>(
        std::find(w.entity_ids.begin(), w.entity_ids.end(), s.entity_id) - w.entity_ids.begin());
    for (const auto& word : s.words) EXPECT_EQ(word, w.attributes[e][0]);
  }
}

TEST(Synthetic, VotesMatchRecountWhenNoiseDisjoint) {
  const auto w = generate_synthetic({.entities = 15, .attribute_vocab = 60, .attributes_per_entity = 6,
                                     .sentences_per_entity = 30, .noise_ratio = 0.4,
                                     .noise_includes_attributes = false});
  std::map<std::pair<std::string, std::string>, int> recount;
  for (const auto& s : w.sentences) {
    const std::set<std::string> uniq(s.words.begin(), s.words.end());
    for (const auto& word : uniq) {
      if (word.rfind("attr", 0) == 0) ++recount[{s.entity_id, word}];
    }
  }
  for (std::size_t e = 0; e < w.entity_ids.size(); ++e) {
    const std::set<std::string> owned(w.attributes[e].begin(), w.attributes[e].end());
    for (const auto& t : w.attribute_words) {
      const int n = w.votes.votes(w.entity_ids[e], t);
      EXPECT_EQ(n, (recount[{w.entity_ids[e], t}]));
      EXPECT_EQ(n > 0, owned.count(t) > 0) << w.entity_ids[e] << " " << t;
    }
  }
}

TEST(Synthetic, QueriesHaveUniqueOracleAnswer) {
  const auto w = generate_synthetic({});
  ASSERT_EQ(w.queries.size(), 100u);
  for (std::size_t e = 0; e < w.queries.size(); ++e) {
    const auto overlap = detail::attribute_overlap(split_words(w.queries[e].text), w.attributes);
    const auto best = std::max_element(overlap.begin(), overlap.end()) - overlap.begin();
    EXPECT_EQ(static_cast<std::size_t>(best), e);
    EXPECT_EQ(w.queries[e].relevant_entity_ids, std::vector<std::string>{w.entity_ids[e]});
  }
}

TEST(Synthetic, RejectsInvalidSpecs) {
  EXPECT_THROW(generate_synthetic({.attribute_vocab = 3, .attributes_per_entity = 4}),
               std::invalid_argument);
  EXPECT_THROW(generate_synthetic({.noise_ratio = 1.0}), std::invalid_argument);
  EXPECT_THROW(generate_synthetic({.entities = 0}), std::invalid_argument);
}

// ---- file formats ----------------------------------------------------------------

TEST(Io, RoundTripsEveryFormat) {
  const auto w = generate_synthetic({.entities = 6, .attribute_vocab = 12, .attributes_per_entity = 3,
                                     .sentences_per_entity = 5});
  const auto vocab = world_vocabulary(w);
  const auto corpus = encode_corpus(w.sentences, vocab);
  const auto reviews = w.reviews();
  const std::string dir = testing::temp_path("io_");
  io::write_reviews(dir + "reviews.jsonl", reviews);
  io::write_corpus(dir + "corpus.jsonl", corpus);
  io::write_vocab(dir + "vocab.tsv", vocab);
  io::write_votes(dir + "votes.jsonl", w.votes);
  io::write_queries(dir + "queries.jsonl", w.queries);

  const auto r2 = io::read_reviews(dir + "reviews.jsonl");
  ASSERT_EQ(r2.size(), reviews.size());
  EXPECT_EQ(r2[3].text, reviews[3].text);
  const auto c2 = io::read_corpus(dir + "corpus.jsonl");
  ASSERT_EQ(c2.size(), corpus.size());
  for (std::size_t i = 0; i < c2.size(); ++i) EXPECT_EQ(c2[i].tokens, corpus[i].tokens);
  EXPECT_EQ(io::read_vocab(dir + "vocab.tsv"), vocab);
  const auto v2 = io::read_votes(dir + "votes.jsonl");
  EXPECT_EQ(v2.tags(), w.votes.tags());
  EXPECT_EQ(v2.pair_count(), w.votes.pair_count());
  for (const auto& e : w.entity_ids) EXPECT_EQ(v2.of(e), w.votes.of(e));
  const auto q2 = io::read_queries(dir + "queries.jsonl");
  ASSERT_EQ(q2.size(), w.queries.size());
  EXPECT_EQ(q2[2].text, w.queries[2].text);
  EXPECT_NO_THROW(io::validate_corpus(c2, vocab));
}

TEST(Io, ReportsMalformedLine) {
  const std::string path = testing::temp_path("bad.jsonl");
  {
    std::ofstream out(path);
    out << "{\"entity_id\": \"a\", \"tokens\": [5]}\n{oops\n";
  }
  try {
    io::read_corpus(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(io::read_corpus(testing::temp_path("missing.jsonl")), DataError);
}

TEST(Io, ValidateCorpusRejectsEntityTokens) {
  const auto vocab = extend_with_entities(small_vocab(), {"m"});
  EXPECT_THROW(io::validate_corpus({{"m", {vocab.entity_token("m")}}}, vocab), DataError);
  EXPECT_THROW(io::validate_corpus({{"x", {5}}}, vocab), DataError);
  EXPECT_NO_THROW(io::validate_corpus({{"m", {5, 6}}}, vocab));
}

}  // namespace
}  // namespace docent
