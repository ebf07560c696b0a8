// Acceptance run: one test per criterion, one PASS/FAIL line per criterion
// at the end. Criteria 4-6 share the pretrained default-world models, so the
// binary is registered with ctest as a single test.
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <map>
#include <numeric>
#include <optional>
#include <regex>

#include "docent/eval/baselines.hpp"
#include "docent/eval/retrieval.hpp"
#include "docent/eval/tags.hpp"
#include "docent/finetune/finetune.hpp"
#include "docent/numerics/grad_check.hpp"
#include "docent/objectives/pretrain.hpp"
#include "docent/text/preprocess.hpp"
#include "docent/text/synthetic.hpp"
#include "metric_oracles.hpp"

namespace docent {
namespace {

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

void note(const char* fmt, auto... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

// ---- shared worlds --------------------------------------------------------------------------

struct World {
  SyntheticWorld world;
  Vocabulary vocab;
  std::vector<CorpusExample> corpus;
};

World make_world(const SyntheticWorldSpec& spec) {
  World w;
  w.world = generate_synthetic(spec);
  w.vocab = world_vocabulary(w.world);
  w.corpus = encode_corpus(w.world.sentences, w.vocab);
  return w;
}

const World& toy_world() {
  static const World w = make_world(SyntheticWorldSpec{.entities = 8, .attribute_vocab = 24,
                                                       .attributes_per_entity = 4, .sentences_per_entity = 6,
                                                       .words_per_sentence = 6, .filler_vocab = 12});
  return w;
}

/// 100 entities, 20 attributes each, 50 sentences each, noise 0.3, seed 7.
const World& default_world() {
  static const World w = make_world(SyntheticWorldSpec{});
  return w;
}

constexpr std::size_t kPretrainSteps = 2000;
constexpr double kHoldout = 0.2;
constexpr std::uint64_t kSplitSeed = 7;

const Model<float>& pretrained(Variant v) {
  static std::map<Variant, Model<float>> cache;
  if (auto it = cache.find(v); it != cache.end()) return it->second;
  const auto& w = default_world();
  auto model = make_model<float>(ModelConfig::for_vocabulary(w.vocab, v), 1);
  TrainingConfig tc;
  tc.steps = kPretrainSteps;
  const double t0 = cpu_seconds();
  const auto trace = pretrain(model, w.corpus, w.vocab, tc);
  note("pretrained %s for %zu steps in %.0f s (final loss %.3f)", to_string(v).c_str(), trace.size(),
       cpu_seconds() - t0, trace.back().loss);
  return cache.emplace(v, std::move(model)).first->second;
}

struct TagResult {
  double map = 0, auc = 0;
};

TagResult score_tags(const Model<float>& model, const Split& split) {
  const auto& w = default_world();
  const TagScorer<float> scorer(model, w.vocab, split.test_tags);
  std::vector<std::vector<double>> scores;
  for (const auto& e : split.test_entities) scores.push_back(scorer.scores(e));
  const auto ev = eval::evaluate_tags(split.test_entities, split.test_tags, scores, w.world.votes, {});
  return {ev.map.value, ev.auc.value};
}

TagResult finetuned_result(Variant v, bool open) {
  static std::map<std::pair<Variant, bool>, TagResult> cache;
  const auto key = std::pair{v, open};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const auto& w = default_world();
  const auto split = open ? open_split(w.world.entity_ids, w.world.votes.tags(), kHoldout, kSplitSeed)
                          : closed_split(w.world.entity_ids, w.world.votes.tags(), kHoldout, kSplitSeed);
  auto model = pretrained(v);
  const auto before = score_tags(model, split);
  const double t0 = cpu_seconds();
  finetune(model, w.vocab, w.world.votes, split, FinetuneConfig{});
  const auto after = score_tags(model, split);
  note("%s %s: before fine-tuning MAP %.3f AUC %.3f; after MAP %.3f AUC %.3f (%.0f s)", to_string(v).c_str(),
       open ? "open" : "closed", before.map, before.auc, after.map, after.auc, cpu_seconds() - t0);
  return cache.emplace(key, after).first->second;
}

// ---- 1 -------------------------------------------------------------------------------------

TEST(Acceptance, C1_GradientIntegrity) {
  const double t0 = cpu_seconds();
  const auto& w = toy_world();
  TrainingConfig tc;
  tc.word_mask_rate = 0.4;
  std::vector<const CorpusExample*> rows{&w.corpus[0], &w.corpus[6], &w.corpus[13], &w.corpus[20], &w.corpus[21]};
  auto check = [](const std::string& what, auto build, const ParamStore<double>& params) {
    GradCheckOptions opt;
    opt.samples = 200;
    const auto r = grad_check(ad::differentiable<double>(build), params, opt);
    note("%-12s max relative error %.2e over %zu coordinates", what.c_str(), r.max_relative_error, r.checked);
    EXPECT_LT(r.max_relative_error, 1e-4) << what << " worst " << r.worst_param << "[" << r.worst_index << "]";
  };
  for (const Variant v : {Variant::dual, Variant::full, Variant::hybrid}) {
    const auto m = make_model<double>(ModelConfig::for_vocabulary(w.vocab, v), 21);
    ASSERT_EQ(m.config.layers, 2u);
    ASSERT_EQ(m.config.heads, 4u);
    ASSERT_EQ(m.config.hidden, 64u);
    Rng rng(3);
    const auto b = make_batch(v, rows, w.vocab, tc, rng);
    check(to_string(v), [&](ad::Tape<double>& t, const ParamStore<double>& p) {
      return variant_loss(t, p, m.config, b, tc).total;
    }, m.params);
  }
  {
    const auto m = make_model<double>(ModelConfig::for_vocabulary(w.vocab, Variant::full), 22);
    std::vector<Sequence> seqs;
    for (std::size_t i = 0; i < 3; ++i) {
      seqs.push_back(entity_text_sequence(w.vocab.entity_token(w.world.entity_ids[i]),
                                          tokenize(w.world.attribute_words[i], w.vocab)));
    }
    check("full head", [&](ad::Tape<double>& t, const ParamStore<double>& p) {
      return full_tag_loss<double>(t, p, m.config, seqs, {1.0, 0.0, 1.0}, {2.0, 1.0, 0.5});
    }, m.params);
  }
  for (const Variant v : {Variant::dual, Variant::hybrid}) {
    const auto m = make_model<double>(ModelConfig::for_vocabulary(w.vocab, v), 23);
    TagBatch b;
    b.tags = {w.world.attribute_words[0], w.world.attribute_words[1], w.world.attribute_words[2]};
    b.entities = {0, 3};
    b.candidates = {{0, 1, 2}, {2, 0}};
    b.weights = {1.0, 2.5};
    check(to_string(v) + " head", [&](ad::Tape<double>& t, const ParamStore<double>& p) {
      return dual_tag_loss(t, p, m.config, w.vocab, b, 4.0);
    }, m.params);
  }
  const double elapsed = cpu_seconds() - t0;
  note("runtime %.1f s CPU", elapsed);
  EXPECT_LT(elapsed, 120.0);
}

// ---- 2 -------------------------------------------------------------------------------------

TEST(Acceptance, C2_MetricOracleEquivalence) {
  using namespace eval;
  using namespace eval::oracle;
  constexpr double tol = 1e-9;
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto ranked = identity_ranking(n);
    for (const auto& l : all_labelings(n)) {
      const bool any = std::any_of(l.begin(), l.end(), [](int x) { return x; });
      for (std::size_t k = 1; k <= n; ++k) ASSERT_NEAR(precision_at_k(l, k).value, oracle_precision(l, k), tol);
      const auto ap = average_precision(l);
      ASSERT_EQ(ap.defined, any);
      if (any) {
        ASSERT_NEAR(ap.value, oracle_ap(l), tol);
      }
      std::set<std::string> rel;
      for (std::size_t i = 0; i < n; ++i)
        if (l[i]) rel.insert("e" + std::to_string(i));
      double rr = 0;
      for (std::size_t i = n; i-- > 0;)
        if (l[i]) rr = 1.0 / static_cast<double>(i + 1);
      if (any) {
        ASSERT_NEAR(reciprocal_rank(ranked, rel).value, rr, tol);
        for (std::size_t k = 1; k <= n; ++k) {
          std::size_t found = 0;
          for (std::size_t i = 0; i < k; ++i) found += static_cast<std::size_t>(l[i]);
          ASSERT_NEAR(recall_at_k(ranked, rel, k).value, static_cast<double>(found) / static_cast<double>(rel.size()),
                      tol);
        }
      }
      ++cases;
    }
    // MAP and MRR are plain means over the per-list values
    const auto lists = all_labelings(n);
    std::vector<std::vector<int>> nonempty;
    for (const auto& l : lists)
      if (std::any_of(l.begin(), l.end(), [](int x) { return x; })) nonempty.push_back(l);
    double ap_sum = 0;
    for (const auto& l : nonempty) ap_sum += oracle_ap(l);
    ASSERT_NEAR(mean_average_precision(nonempty).value, ap_sum / static_cast<double>(nonempty.size()), tol);

    for (const auto& r : all_grades(n, 3)) {
      const bool zero = std::all_of(r.begin(), r.end(), [](double x) { return x == 0; });
      for (std::size_t k = 1; k <= n; ++k) {
        ASSERT_NEAR(ndcg_at_k(r, k).value, zero ? 0.0 : oracle_dcg(r, k) / oracle_idcg(r, k), tol);
      }
      for (const auto& l : all_labelings(n)) {
        const auto pos = std::accumulate(l.begin(), l.end(), std::size_t{0});
        if (pos == 0 || pos == n) continue;
        ASSERT_NEAR(roc_auc(r, l).value, oracle_auc(r, l), tol);
        ++cases;
      }
    }
  }
  note("%zu labelled lists checked", cases);
}

// ---- 3 -------------------------------------------------------------------------------------

TEST(Acceptance, C3_LossIdentities) {
  const auto& w = toy_world();
  std::vector<const CorpusExample*> rows{&w.corpus[0], &w.corpus[6], &w.corpus[12], &w.corpus[18], &w.corpus[24]};
  std::set<std::string> distinct;
  for (const auto* r : rows) distinct.insert(r->entity_id);
  ASSERT_EQ(distinct.size(), rows.size());

  // hybrid with no masked words is the dual loss
  const auto hybrid = make_model<double>(ModelConfig::for_vocabulary(w.vocab, Variant::hybrid), 31);
  TrainingConfig no_words;
  no_words.word_mask_rate = 0.0;
  Rng r1(1);
  const auto unmasked = make_batch(Variant::hybrid, rows, w.vocab, no_words, r1);
  ad::Tape<double> ta(false), tb(false);
  const double h = hybrid_loss(ta, hybrid.params, hybrid.config, unmasked, 4.0, 1.0).total.item();
  const double d = dual_loss(tb, hybrid.params, hybrid.config, unmasked, 4.0).total.item();
  note("hybrid %.17g dual %.17g", h, d);
  EXPECT_EQ(h, d);

  // full with lambda 0 is the entity-token cross-entropy
  const auto full = make_model<double>(ModelConfig::for_vocabulary(w.vocab, Variant::full), 32);
  TrainingConfig both;
  both.word_mask_rate = 0.5;
  both.entity_mask_rate = 0.5;
  Rng r2(2);
  const auto fb = make_batch(Variant::full, rows, w.vocab, both, r2);
  ASSERT_GT(fb.masked_words(), 0u);
  ad::Tape<double> tc(false), td(false);
  const double got = full_loss(tc, full.params, full.config, fb, 0.0).total.item();
  auto enc = encode_batch(td, full.params, full.config, fb.inputs);
  std::vector<std::size_t> pos, labels;
  for (std::size_t i = 0; i < fb.size(); ++i) {
    if (!fb.entity_masked[i]) continue;
    pos.push_back(enc.row(i, kEntityPosition));
    labels.push_back(full.config.entity_base() + fb.entities[i]);
  }
  ASSERT_FALSE(pos.empty());
  const auto logits = mlm_logits(td, full.params, enc.hidden, pos);
  const double ce = ad::softmax_cross_entropy(logits, labels).item();
  double scalar = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    scalar += cross_entropy(softmax<double>(logits.value().row(i)), labels[i]);
  }
  scalar /= static_cast<double>(pos.size());
  note("full(lambda=0) %.17g entity CE %.17g (scalar form %.17g)", got, ce, scalar);
  EXPECT_EQ(got, ce);
  EXPECT_NEAR(got, scalar, 1e-12);

  // B = 1
  const auto dual = make_model<double>(ModelConfig::for_vocabulary(w.vocab, Variant::dual), 33);
  TrainingConfig plain;
  Rng r3(3);
  ad::Tape<double> te(false);
  const double one = dual_loss(te, dual.params, dual.config, make_batch(Variant::dual, {rows[0]}, w.vocab, plain, r3),
                               4.0)
                         .total.item();
  note("B=1 dual loss %.17g", one);
  EXPECT_EQ(one, 0.0);

  // identical entity vectors make every score equal
  auto uniform = dual;
  const auto where = entity_storage(uniform.config);
  auto& table = uniform.params.at(where.tensor);
  const std::vector<double> first(table.row(where.first_row).begin(), table.row(where.first_row).end());
  for (std::size_t e = 0; e < where.rows; ++e) {
    std::copy(first.begin(), first.end(), table.row(where.first_row + e).begin());
  }
  ad::Tape<double> tf(false);
  const double u = dual_loss(tf, uniform.params, uniform.config,
                             make_batch(Variant::dual, rows, w.vocab, plain, r3), 4.0)
                       .total.item();
  note("uniform-score dual loss %.12f, log B %.12f", u, std::log(static_cast<double>(rows.size())));
  EXPECT_NEAR(u, std::log(static_cast<double>(rows.size())), 1e-6);
}

// ---- 4 -------------------------------------------------------------------------------------

double zero_shot_mrr(const Model<float>& model) {
  const auto& w = default_world();
  const eval::ZeroShotRanker<float> ranker(model, w.vocab);
  std::vector<eval::RankedList> lists;
  std::vector<std::set<std::string>> relevant;
  for (const auto& q : w.world.queries) {
    lists.push_back(ranker.rank(q.text));
    relevant.emplace_back(q.relevant_entity_ids.begin(), q.relevant_entity_ids.end());
  }
  return eval::mrr(lists, relevant).value;
}

TEST(Acceptance, C4_ZeroShotRetrieval) {
  const double t0 = cpu_seconds();
  const auto& w = default_world();
  ASSERT_EQ(w.world.entity_ids.size(), 100u);
  double harmonic = 0;
  for (int i = 1; i <= 100; ++i) harmonic += 1.0 / i;
  const double random_mrr = harmonic / 100.0;
  const double dual = zero_shot_mrr(pretrained(Variant::dual));
  const double hybrid = zero_shot_mrr(pretrained(Variant::hybrid));
  note("%zu queries; random-ranking MRR %.4f, bar %.4f", w.world.queries.size(), random_mrr, 10 * random_mrr);
  note("dual MRR %.4f, hybrid MRR %.4f", dual, hybrid);
  EXPECT_GE(dual, 10 * random_mrr);
  EXPECT_GE(hybrid, 10 * random_mrr);
  EXPECT_GE(hybrid, dual - 0.02);
  const double elapsed = cpu_seconds() - t0;
  note("runtime %.0f s CPU", elapsed);
  EXPECT_LT(elapsed, 900.0);
}

// ---- 5 -------------------------------------------------------------------------------------

TEST(Acceptance, C5_SupervisedTagPrediction) {
  const auto& w = default_world();
  const auto split = closed_split(w.world.entity_ids, w.world.votes.tags(), kHoldout, kSplitSeed);
  std::map<std::string, eval::TfIdf::Doc> docs;
  for (const auto& s : w.world.sentences) docs[s.entity_id].push_back(s.words);
  const eval::TfIdf tfidf(w.vocab.entity_ids(), docs);
  std::vector<std::vector<double>> scores;
  for (const auto& e : split.test_entities) {
    std::vector<double> row;
    for (const auto& t : split.test_tags) row.push_back(tfidf.tag_score(w.vocab.entity_index(e), split_words(t)));
    scores.push_back(std::move(row));
  }
  const auto base = eval::evaluate_tags(split.test_entities, split.test_tags, scores, w.world.votes, {});
  note("%zu held-out entities; TF-IDF MAP %.3f AUC %.3f", split.test_entities.size(), base.map.value,
       base.auc.value);
  for (const Variant v : {Variant::dual, Variant::full, Variant::hybrid}) {
    const auto r = finetuned_result(v, false);
    EXPECT_GE(r.auc, 0.9) << to_string(v);
    EXPECT_GT(r.map, base.map.value) << to_string(v);
  }
}

// ---- 6 -------------------------------------------------------------------------------------

TEST(Acceptance, C6_OpenVocabulary) {
  for (const Variant v : {Variant::dual, Variant::hybrid}) {
    const auto closed = finetuned_result(v, false);
    const auto open = finetuned_result(v, true);
    note("%s held-out-tag AUC %.3f vs closed AUC %.3f (gap %.3f)", to_string(v).c_str(), open.auc, closed.auc,
         closed.auc - open.auc);
    EXPECT_LE(std::abs(open.auc - closed.auc), 0.1) << to_string(v);
  }
}

// ---- 7 -------------------------------------------------------------------------------------

std::uint64_t checksum(const Model<float>& m) {
  const auto where = entity_storage(m.config);
  const auto& t = m.params.at(where.tensor);
  const auto* bytes = reinterpret_cast<const unsigned char*>(&*t.row(where.first_row).begin());
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < where.rows * t.cols() * sizeof(float); ++i) h = (h ^ bytes[i]) * 1099511628211ull;
  return h;
}

TEST(Acceptance, C7_ContractSuite) {
  const auto& w = toy_world();
  ModelConfig small;
  small.layers = 1;
  small.heads = 2;
  small.hidden = 16;
  small.entity_dim = 16;
  small.ffn_hidden = 32;
  small.max_seq_len = 16;

  // frozen entity embeddings
  const auto split = closed_split(w.world.entity_ids, w.world.votes.tags(), kHoldout, kSplitSeed);
  FinetuneConfig fc;
  fc.epochs = 1;
  for (const Variant v : {Variant::dual, Variant::full, Variant::hybrid}) {
    auto m = make_model<float>(ModelConfig::for_vocabulary(w.vocab, v, small), 41);
    const auto before = checksum(m);
    const auto snapshot = m.params;
    finetune(m, w.vocab, w.world.votes, split, fc);
    EXPECT_EQ(checksum(m), before) << to_string(v);
    EXPECT_NE(m.params, snapshot) << to_string(v);
  }

  // preprocess filters
  auto reviews_for = [](const std::string& id, const std::string& name, int n) {
    std::vector<RawReview> out;
    for (int i = 0; i < n; ++i) out.push_back({id, name, "one two three four " + std::to_string(i)});
    return out;
  };
  auto entities_of = [](const std::vector<SentenceText>& s) {
    std::set<std::string> ids;
    for (const auto& x : s) ids.insert(x.entity_id);
    return ids;
  };
  {
    auto r = reviews_for("m4", "", 4);
    for (const auto& x : reviews_for("m5", "", 5)) r.push_back(x);
    EXPECT_EQ(entities_of(preprocess(r)), (std::set<std::string>{"m5"}));
  }
  {
    auto r = reviews_for("m", "", 4);
    r.push_back({"m", "", "only four words here"});
    EXPECT_TRUE(preprocess(r).empty());
    r.back().text = "exactly five words right here";
    EXPECT_EQ(preprocess(r).size(), 5u);
  }
  {
    auto r = reviews_for("m", "Spirited Away", 4);
    r.push_back({"m", "Spirited Away", "we saw spirited AWAY twice and loved it"});
    const auto out = preprocess(r);
    bool scrubbed = false;
    for (const auto& s : out) {
      for (const auto& word : s.words) EXPECT_NE(word, "spirited");
      if (s.review == 4) {
        scrubbed = s.words == std::vector<std::string>{"we", "saw", "[UNK]", "[UNK]", "twice", "and", "loved", "it"};
      }
    }
    EXPECT_TRUE(scrubbed);
  }

  // strict threshold
  EXPECT_EQ(eval::binarize(2, 2), 0);
  EXPECT_EQ(eval::binarize(3, 2), 1);

  // masking at rate 1 never touches specials or entity tokens
  TrainingConfig all;
  all.word_mask_rate = 1.0;
  all.entity_mask_rate = 1.0;
  std::vector<const CorpusExample*> rows;
  for (std::size_t i = 0; i < w.corpus.size(); i += 5) rows.push_back(&w.corpus[i]);
  for (const Variant v : {Variant::dual, Variant::full, Variant::hybrid}) {
    Rng rng(5);
    const auto b = make_batch(v, rows, w.vocab, all, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto original = v == Variant::full
                                ? entity_text_sequence(w.vocab.entity_token(rows[i]->entity_id), rows[i]->tokens)
                                : text_sequence(rows[i]->tokens);
      ASSERT_EQ(b.inputs[i].tokens.size(), original.tokens.size());
      for (std::size_t k = 0; k < original.tokens.size(); ++k) {
        const int t = original.tokens[k];
        const bool word = !w.vocab.is_special(t) && !w.vocab.is_entity(t);
        if (!word && !(v == Variant::full && k == kEntityPosition)) {
          EXPECT_EQ(b.inputs[i].tokens[k], t);
        }
      }
      for (const auto p : b.positions[i]) {
        const int t = original.tokens[p];
        EXPECT_FALSE(w.vocab.is_special(t) || w.vocab.is_entity(t));
      }
    }
  }

  // seeds give bit-identical runs
  EXPECT_EQ(make_world(SyntheticWorldSpec{.entities = 8, .seed = 11}).corpus,
            make_world(SyntheticWorldSpec{.entities = 8, .seed = 11}).corpus);
  TrainingConfig tc;
  tc.steps = 10;
  tc.batch_size = 4;
  for (const Variant v : {Variant::dual, Variant::full, Variant::hybrid}) {
    auto a = make_model<float>(ModelConfig::for_vocabulary(w.vocab, v, small), 42);
    auto b = make_model<float>(ModelConfig::for_vocabulary(w.vocab, v, small), 42);
    ASSERT_EQ(a.params, b.params);
    pretrain(a, w.corpus, w.vocab, tc);
    pretrain(b, w.corpus, w.vocab, tc);
    finetune(a, w.vocab, w.world.votes, split, fc);
    finetune(b, w.vocab, w.world.votes, split, fc);
    EXPECT_EQ(a.params, b.params) << to_string(v);
  }
}

// ---- summary ---------------------------------------------------------------------------------

class CriterionLines : public ::testing::EmptyTestEventListener {
 public:
  void OnTestEnd(const ::testing::TestInfo& info) override {
    static const std::regex pattern("C(\\d+)_(.*)");
    std::smatch m;
    const std::string name = info.name();
    if (!std::regex_match(name, m, pattern)) return;
    lines_.push_back("criterion " + m[1].str() + " " + (info.result()->Passed() ? "PASS" : "FAIL") + "  " +
                     m[2].str());
  }
  void OnTestProgramEnd(const ::testing::UnitTest&) override {
    std::printf("\n");
    for (const auto& l : lines_) std::printf("%s\n", l.c_str());
    std::fflush(stdout);
  }

 private:
  std::vector<std::string> lines_;
};

}  // namespace
}  // namespace docent

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new docent::CriterionLines);
  return RUN_ALL_TESTS();
}
