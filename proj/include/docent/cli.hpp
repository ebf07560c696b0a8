#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "docent/encoder/checkpoint.hpp"
#include "docent/eval/baselines.hpp"
#include "docent/eval/report.hpp"
#include "docent/eval/retrieval.hpp"
#include "docent/eval/tags.hpp"
#include "docent/finetune/finetune.hpp"
#include "docent/objectives/pretrain.hpp"
#include "docent/text/io.hpp"
#include "docent/text/preprocess.hpp"
#include "docent/text/synthetic.hpp"

namespace docent::cli {

namespace fs = std::filesystem;

// ---- embeddings export ------------------------------------------------------

struct EmbeddingTable {
  Variant variant = Variant::dual;
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vectors;
};

/// Header "#docent-embeddings<TAB>variant=V<TAB>dim=D", then one row per
/// entity: id followed by D floats printed with max_digits10.
inline void export_embeddings(const Checkpoint& ck, const std::string& path) {
  auto out = io::open_out(path);
  const std::size_t dim = ck.model.config.entity_dim;
  out << "#docent-embeddings\tvariant=" << to_string(ck.model.config.variant) << "\tdim=" << dim << '\n';
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t e = 0; e < ck.vocab.entity_count(); ++e) {
    out << ck.vocab.entity_id(e);
    for (const float v : embed_entity(ck.model, e)) out << '\t' << v;
    out << '\n';
  }
}

inline EmbeddingTable read_embeddings(const std::string& path) {
  auto in = io::open_in(path);
  EmbeddingTable t;
  std::string line;
  if (!std::getline(in, line) || line.rfind("#docent-embeddings\t", 0) != 0) {
    throw DataError(path + ": missing embeddings header");
  }
  std::istringstream header(line);
  std::string field;
  std::getline(header, field, '\t');
  bool has_dim = false;
  while (std::getline(header, field, '\t')) {
    if (field.rfind("variant=", 0) == 0) t.variant = parse_variant(field.substr(8));
    if (field.rfind("dim=", 0) == 0) {
      t.dim = std::stoul(field.substr(4));
      has_dim = true;
    }
  }
  if (!has_dim) throw DataError(path + ": header lacks dim");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id;
    std::getline(row, id, '\t');
    std::vector<float> v;
    for (std::string x; std::getline(row, x, '\t');) v.push_back(std::stof(x));
    if (v.size() != t.dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.dim) + " values");
    }
    t.ids.push_back(std::move(id));
    t.vectors.push_back(std::move(v));
  }
  return t;
}

// ---- helpers --------------------------------------------------------------------------

struct Log {
  bool quiet = false;
  template <class... A>
  void operator()(const A&... parts) const {
    if (quiet) return;
    std::ostringstream s;
    (s << ... << parts);
    std::cerr << "[docent] " << s.str() << '\n';
  }
};

inline void require_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory '" + dir + "'");
}

inline void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw DataError("no such file '" + path + "'");
}

inline std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

inline nlohmann::json split_to_json(const Split& s, const std::string& protocol) {
  return {{"protocol", protocol},
          {"train_entities", s.train_entities},
          {"test_entities", s.test_entities},
          {"train_tags", s.train_tags},
          {"test_tags", s.test_tags}};
}

inline Split split_from_json(const nlohmann::json& j) {
  Split s;
  j.at("train_entities").get_to(s.train_entities);
  j.at("test_entities").get_to(s.test_entities);
  j.at("train_tags").get_to(s.train_tags);
  j.at("test_tags").get_to(s.test_tags);
  return s;
}

inline Split make_split(const std::string& protocol, const TagVotes& votes, const std::vector<std::string>& entities,
                        double holdout, std::uint64_t seed) {
  if (protocol == "closed") return closed_split(entities, votes.tags(), holdout, seed);
  if (protocol == "open") return open_split(entities, votes.tags(), holdout, seed);
  throw std::invalid_argument("unknown protocol '" + protocol + "' (expected closed or open)");
}

/// Entities that have both votes and a vocabulary entry, sorted.
inline std::vector<std::string> voted_entities(const TagVotes& votes, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& e : votes.entities()) {
    if (vocab.has_entity(e)) out.push_back(e);
  }
  return out;
}

inline std::vector<std::vector<double>> tag_scores(const Model<float>& model, const Vocabulary& vocab,
                                                   const std::vector<std::string>& entities,
                                                   const std::vector<std::string>& tags, double tau) {
  const TagScorer<float> scorer(model, vocab, tags, tau);
  std::vector<std::vector<double>> out;
  for (const auto& e : entities) out.push_back(scorer.scores(e));
  return out;
}

// ---- run --------------------------------------------------------------------------------

/// Parses argv and runs one subcommand: 0 on success, 1 on usage errors,
/// 2 on data or numeric errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout) {
  CLI::App app{"docent: entity representations from entity-tagged text"};
  app.set_config("--config", "", "INI file of flag values; command-line flags win");
  app.require_subcommand(1);
  Log log;
  app.add_flag("-q,--quiet", log.quiet, "Suppress progress logs on stderr");

  // generate
  SyntheticWorldSpec world;
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "Write a synthetic world: reviews.jsonl, votes.jsonl, queries.jsonl");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--entities", world.entities)->capture_default_str();
  gen->add_option("--attribute-vocab", world.attribute_vocab)->capture_default_str();
  gen->add_option("--attributes-per-entity", world.attributes_per_entity)->capture_default_str();
  gen->add_option("--sentences-per-entity", world.sentences_per_entity)->capture_default_str();
  gen->add_option("--words-per-sentence", world.words_per_sentence)->capture_default_str();
  gen->add_option("--noise-ratio", world.noise_ratio)->capture_default_str();
  gen->add_option("--filler-vocab", world.filler_vocab)->capture_default_str();
  gen->add_option("--noise-zipf", world.noise_zipf)->capture_default_str();
  gen->add_option("--query-attributes", world.query_attributes)->capture_default_str();
  gen->add_option("--queries-per-entity", world.queries_per_entity)->capture_default_str();

  // preprocess
  PreprocessOptions pre;
  std::string pre_reviews, pre_votes, pre_out;
  std::size_t min_freq = 1;
  auto* prep = app.add_subcommand("preprocess", "Filter and split reviews into corpus.jsonl plus vocab.tsv");
  prep->add_option("--reviews", pre_reviews, "Reviews JSONL")->required()->check(CLI::ExistingFile);
  prep->add_option("--votes", pre_votes, "Votes TSV; its tags join the vocabulary")->check(CLI::ExistingFile);
  prep->add_option("--out", pre_out, "Output directory")->required();
  prep->add_option("--min-review-words", pre.min_review_words)->capture_default_str();
  prep->add_option("--min-reviews", pre.min_reviews_per_entity)->capture_default_str();
  prep->add_option("--max-seq-len", pre.max_seq_len)->capture_default_str();
  prep->add_option("--min-freq", min_freq)->capture_default_str();

  // shared by pretrain
  ModelConfig shape;
  TrainingConfig tc;
  std::string variant_name = "dual", data_dir, ckpt_out, metrics_path;
  auto* pt = app.add_subcommand("pretrain", "Pre-train a model on corpus.jsonl/vocab.tsv");
  pt->add_option("--data", data_dir, "Directory holding corpus.jsonl and vocab.tsv")->required();
  pt->add_option("--variant", variant_name)->check(CLI::IsMember({"dual", "full", "hybrid"}))->capture_default_str();
  pt->add_option("--out", ckpt_out, "Checkpoint directory")->required();
  pt->add_option("--seed", tc.seed, "Run seed")->required();
  pt->add_option("--steps", tc.steps)->capture_default_str();
  pt->add_option("--batch-size", tc.batch_size)->capture_default_str();
  pt->add_option("--lr", tc.adam.lr)->capture_default_str();
  pt->add_option("--warmup", tc.warmup_steps)->capture_default_str();
  pt->add_option("--word-mask", tc.word_mask_rate)->capture_default_str();
  pt->add_option("--entity-mask", tc.entity_mask_rate)->capture_default_str();
  pt->add_option("--lambda", tc.lambda)->capture_default_str();
  pt->add_option("--tau", tc.tau)->capture_default_str();
  pt->add_option("--checkpoint-every", tc.checkpoint_every)->capture_default_str();
  pt->add_option("--layers", shape.layers)->capture_default_str();
  pt->add_option("--heads", shape.heads)->capture_default_str();
  pt->add_option("--hidden", shape.hidden)->capture_default_str();
  pt->add_option("--ffn", shape.ffn_hidden)->capture_default_str();
  pt->add_option("--max-seq-len", shape.max_seq_len)->capture_default_str();
  pt->add_option("--metrics", metrics_path, "Per-step metrics JSONL");

  // finetune
  FinetuneConfig fc;
  std::string ft_ckpt, ft_votes, ft_out, protocol = "closed", weight_mode = "log1p", predictions;
  double holdout = 0.2;
  std::uint64_t split_seed = 7;
  bool no_freeze = false;
  auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint on tag votes");
  ft->add_option("--checkpoint", ft_ckpt)->required()->check(CLI::ExistingDirectory);
  ft->add_option("--votes", ft_votes)->required()->check(CLI::ExistingFile);
  ft->add_option("--out", ft_out, "Output checkpoint directory")->required();
  ft->add_option("--seed", fc.seed)->required();
  ft->add_option("--protocol", protocol)->check(CLI::IsMember({"closed", "open"}))->capture_default_str();
  ft->add_option("--holdout", holdout)->capture_default_str();
  ft->add_option("--split-seed", split_seed)->capture_default_str();
  ft->add_option("--epochs", fc.epochs)->capture_default_str();
  ft->add_option("--lr", fc.lr)->capture_default_str();
  ft->add_option("--batch-size", fc.batch_size)->capture_default_str();
  ft->add_option("--negative-rate", fc.negative_rate)->capture_default_str();
  ft->add_option("--weight-mode", weight_mode)->check(CLI::IsMember({"linear", "log1p"}))->capture_default_str();
  ft->add_option("--tau", fc.tau)->capture_default_str();
  ft->add_flag("--no-freeze", no_freeze, "Let entity embeddings train");
  ft->add_option("--predictions", predictions, "Write held-out predictions TSV");

  // evaluate
  eval::EvalConfig ec;
  std::string ev_ckpt, ev_queries, ev_votes, ev_report, ev_data, baseline = "model", aggregation = "max";
  double ev_tau = 4.0;
  auto* ev = app.add_subcommand("evaluate", "Score retrieval queries and/or tag prediction; writes a JSON report");
  ev->add_option("--checkpoint", ev_ckpt)->check(CLI::ExistingDirectory);
  ev->add_option("--queries", ev_queries, "Queries JSONL for zero-shot retrieval")->check(CLI::ExistingFile);
  ev->add_option("--votes", ev_votes, "Votes TSV for tag prediction")->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "corpus.jsonl/vocab.tsv directory (baselines)");
  ev->add_option("--baseline", baseline)
      ->check(CLI::IsMember({"model", "tfidf", "toptags", "bos"}))
      ->capture_default_str();
  ev->add_option("--aggregation", aggregation)->check(CLI::IsMember({"max", "mean"}))->capture_default_str();
  ev->add_option("--protocol", protocol)->check(CLI::IsMember({"closed", "open"}))->capture_default_str();
  ev->add_option("--holdout", holdout)->capture_default_str();
  ev->add_option("--split-seed", split_seed)->capture_default_str();
  ev->add_option("--threshold", ec.threshold)->capture_default_str();
  ev->add_option("--k", ec.k_values)->capture_default_str();
  ev->add_option("--recall-k", ec.recall_k)->capture_default_str();
  ev->add_option("--tau", ev_tau)->capture_default_str();
  ev->add_option("--report", ev_report, "Report path (default: stdout)");

  // retrieve
  std::string rt_ckpt, query;
  std::size_t top_k = 10;
  auto* rt = app.add_subcommand("retrieve", "Rank entities for one query; TSV rank, entity_id, score on stdout");
  rt->add_option("--checkpoint", rt_ckpt)->required()->check(CLI::ExistingDirectory);
  rt->add_option("--query", query)->required();
  rt->add_option("--top-k", top_k)->capture_default_str();

  // export
  std::string ex_ckpt, ex_out;
  auto* ex = app.add_subcommand("export", "Write entity embeddings as TSV");
  ex->add_option("--checkpoint", ex_ckpt)->required()->check(CLI::ExistingDirectory);
  ex->add_option("--out", ex_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, std::cerr);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, std::cerr);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }

  try {
    if (*gen) {
      world.seed = gen_seed;
      const auto w = generate_synthetic(world);
      require_dir(gen_out);
      io::write_reviews(join(gen_out, "reviews.jsonl"), w.reviews());
      io::write_votes(join(gen_out, "votes.jsonl"), w.votes);
      io::write_queries(join(gen_out, "queries.jsonl"), w.queries);
      log("generated ", w.entity_ids.size(), " entities, ", w.sentences.size(), " sentences, ",
          w.queries.size(), " queries in ", gen_out);
    } else if (*prep) {
      const auto reviews = io::read_reviews(pre_reviews);
      const auto sentences = preprocess(reviews, pre);
      if (sentences.empty()) throw DataError("no reviews survive preprocessing");
      std::vector<std::vector<std::string>> words;
      std::vector<std::string> entities;
      for (const auto& s : sentences) {
        words.push_back(s.words);
        if (entities.empty() || entities.back() != s.entity_id) entities.push_back(s.entity_id);
      }
      auto base = build_vocab(words, min_freq);
      if (!pre_votes.empty()) {
        const auto votes = io::read_votes(pre_votes);
        for (const auto& t : votes.tags()) {
          for (const auto& w : split_words(t)) {
            if (!base.lookup(w)) base.add_word(w);
          }
        }
      }
      const auto vocab = extend_with_entities(std::move(base), entities);
      require_dir(pre_out);
      io::write_corpus(join(pre_out, "corpus.jsonl"), encode_corpus(sentences, vocab));
      io::write_vocab(join(pre_out, "vocab.tsv"), vocab);
      log("kept ", sentences.size(), " sentences over ", entities.size(), " entities; vocabulary ", vocab.size());
    } else if (*pt) {
      const auto vocab = io::read_vocab(join(data_dir, "vocab.tsv"));
      const auto corpus = io::read_corpus(join(data_dir, "corpus.jsonl"));
      io::validate_corpus(corpus, vocab);
      tc.validate();
      auto model = make_model<float>(ModelConfig::for_vocabulary(vocab, parse_variant(variant_name), shape), tc.seed);
      std::ofstream metrics;
      if (!metrics_path.empty()) metrics = io::open_out(metrics_path);
      PretrainHooks hooks;
      const std::size_t every = std::max<std::size_t>(1, tc.steps / 20);
      hooks.on_step = [&](const StepMetrics& m) {
        if (metrics.is_open()) metrics << to_json(m).dump() << '\n';
        if (m.step % every == 0 || m.step == tc.steps) {
          log("step ", m.step, "/", tc.steps, " loss ", m.loss, " (entity ", m.loss_entity, ", mlm ", m.loss_mlm, ")");
        }
      };
      hooks.on_warning = [&](const std::string& w) { log("warning: ", w); };
      hooks.on_checkpoint = [&](std::size_t step, const Model<float>& m) {
        const auto dir = join(ckpt_out, "step-" + std::to_string(step));
        save_checkpoint(dir, m, vocab);
        log("checkpoint ", dir);
      };
      pretrain(model, corpus, vocab, tc, hooks);
      save_checkpoint(ckpt_out, model, vocab);
      log("saved ", ckpt_out);
    } else if (*ft) {
      auto ck = load_checkpoint(ft_ckpt);
      const auto votes = io::read_votes(ft_votes);
      fc.weight_mode = parse_weight_mode(weight_mode);
      fc.freeze_entities = !no_freeze;
      const auto split = make_split(protocol, votes, voted_entities(votes, ck.vocab), holdout, split_seed);
      FinetuneHooks hooks;
      hooks.on_warning = [&](const std::string& w) { log("warning: ", w); };
      std::size_t steps = 0;
      double running = 0.0;
      hooks.on_step = [&](std::size_t step, double loss) {
        running += loss;
        ++steps;
        if (step % 100 == 0) {
          log("step ", step, " mean loss ", running / static_cast<double>(steps));
          running = 0.0;
          steps = 0;
        }
      };
      const auto trace = finetune(ck.model, ck.vocab, votes, split, fc, hooks);
      save_checkpoint(ft_out, ck.model, ck.vocab);
      auto split_out = io::open_out(join(ft_out, "split.json"));
      split_out << split_to_json(split, protocol).dump(1) << '\n';
      log("fine-tuned ", trace.size(), " steps; saved ", ft_out);
      if (!predictions.empty()) {
        write_predictions(predictions, split.test_entities, split.test_tags,
                          tag_scores(ck.model, ck.vocab, split.test_entities, split.test_tags, fc.tau));
      }
    } else if (*ev) {
      ec.validate();
      if (ev_queries.empty() && ev_votes.empty()) {
        throw CLI::ValidationError("evaluate needs --queries and/or --votes");
      }
      const bool model_based = baseline == "model" || baseline == "bos";
      if (model_based && ev_ckpt.empty()) throw CLI::ValidationError("--checkpoint is required for this baseline");
      if ((baseline == "tfidf" || baseline == "bos") && ev_data.empty()) {
        throw CLI::ValidationError("--data is required for the tfidf and bos baselines");
      }
      std::optional<Checkpoint> ck;
      if (!ev_ckpt.empty()) ck = load_checkpoint(ev_ckpt);
      std::optional<Vocabulary> data_vocab;
      std::vector<CorpusExample> corpus;
      if (!ev_data.empty()) {
        data_vocab = io::read_vocab(join(ev_data, "vocab.tsv"));
        corpus = io::read_corpus(join(ev_data, "corpus.jsonl"));
        io::validate_corpus(corpus, *data_vocab);
      }
      const Vocabulary& vocab = ck ? ck->vocab : *data_vocab;
      const auto& entity_ids = vocab.entity_ids();
      std::optional<eval::TfIdf> tfidf;
      if (baseline == "tfidf") {
        std::map<std::string, eval::TfIdf::Doc> docs;
        for (const auto& c : corpus) {
          std::vector<std::string> words;
          for (const int t : c.tokens) words.push_back(data_vocab->token(t));
          docs[c.entity_id].push_back(std::move(words));
        }
        tfidf.emplace(entity_ids, docs);
      }
      std::optional<eval::BagOfSentences<float>> bos;
      if (baseline == "bos") {
        std::map<std::string, std::vector<std::vector<int>>> sents;
        for (const auto& c : corpus) sents[c.entity_id].push_back(c.tokens);
        bos.emplace(ck->model, entity_ids, sents);
      }

      eval::Report report;
      if (!ev_queries.empty()) {
        if (baseline == "toptags") throw CLI::ValidationError("toptags does not rank entities");
        const auto queries = io::read_queries(ev_queries);
        std::optional<eval::ZeroShotRanker<float>> ranker;
        if (baseline == "model") ranker.emplace(ck->model, vocab);
        std::vector<eval::RankedList> ranked;
        std::vector<std::set<std::string>> relevant;
        for (const auto& q : queries) {
          if (ranker) {
            ranked.push_back(ranker->rank(q.text));
          } else if (tfidf) {
            ranked.push_back(tfidf->rank_query(split_words(q.text)));
          } else {
            ranked.push_back(bos->rank_tokens(eval::query_tokens(q.text, vocab), eval::parse_aggregation(aggregation)));
          }
          relevant.emplace_back(q.relevant_entity_ids.begin(), q.relevant_entity_ids.end());
        }
        report.add("mrr", std::nullopt, eval::mrr(ranked, relevant));
        for (const auto k : ec.recall_k) {
          std::vector<eval::Metric> r;
          for (std::size_t i = 0; i < ranked.size(); ++i) r.push_back(eval::recall_at_k(ranked[i], relevant[i], k));
          report.add("recall", k, eval::mean_of(r));
        }
        log("zero-shot MRR ", report.find("mrr")->value, " over ", queries.size(), " queries");
      }
      if (!ev_votes.empty()) {
        if (baseline == "bos") throw CLI::ValidationError("bos does not score tags");
        const auto votes = io::read_votes(ev_votes);
        Split split;
        const auto stored = ck ? fs::path(ev_ckpt) / "split.json" : fs::path();
        if (ck && fs::is_regular_file(stored)) {
          auto in = io::open_in(stored.string());
          split = split_from_json(nlohmann::json::parse(in));
          log("using the fine-tuning split from ", stored.string());
        } else {
          split = make_split(protocol, votes, voted_entities(votes, vocab), holdout, split_seed);
        }
        std::vector<std::vector<double>> scores;
        if (baseline == "model") {
          scores = tag_scores(ck->model, vocab, split.test_entities, split.test_tags, ev_tau);
        } else if (baseline == "tfidf") {
          for (const auto& e : split.test_entities) {
            const std::size_t idx = vocab.entity_index(e);
            std::vector<double> row;
            for (const auto& t : split.test_tags) row.push_back(tfidf->tag_score(idx, split_words(t)));
            scores.push_back(std::move(row));
          }
        } else {
          const auto order = eval::top_tags_baseline(votes, split.train_entities);
          std::map<std::string, double> rank_score;
          for (std::size_t i = 0; i < order.size(); ++i) rank_score[order[i]] = -static_cast<double>(i);
          for (std::size_t e = 0; e < split.test_entities.size(); ++e) {
            std::vector<double> row;
            for (const auto& t : split.test_tags) row.push_back(rank_score.at(t));
            scores.push_back(std::move(row));
          }
        }
        const auto te = eval::evaluate_tags(split.test_entities, split.test_tags, scores, votes, ec);
        report.add_tags("tags.", te);
        log("tag MAP ", te.map.value, " AUC ", te.auc.value, " over ", split.test_entities.size(), " entities");
      }
      if (ev_report.empty()) {
        out << report.json().dump(1) << '\n';
      } else {
        report.write(ev_report);
      }
    } else if (*rt) {
      const auto ck = load_checkpoint(rt_ckpt);
      const auto ranked = eval::zero_shot_rank(ck.model, ck.vocab, query);
      out << std::setprecision(9);
      for (std::size_t i = 0; i < std::min(top_k, ranked.size()); ++i) {
        out << i + 1 << '\t' << ranked.ids[i] << '\t' << ranked.scores[i] << '\n';
      }
    } else if (*ex) {
      const auto ck = load_checkpoint(ex_ckpt);
      export_embeddings(ck, ex_out);
      log("wrote ", ck.vocab.entity_count(), " embeddings to ", ex_out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "docent: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "docent: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "docent: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace docent::cli
