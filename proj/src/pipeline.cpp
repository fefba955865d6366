#include "lwe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lwe/diagnostics.hpp"
#include "lwe/embedding.hpp"
#include "lwe/evaluation.hpp"
#include "lwe/expansion.hpp"
#include "lwe/util.hpp"

namespace lwe {
namespace {

// %.17g survives a text round trip for doubles; reports use a shorter form.
std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Header text stamped on every output file: command, config hash, seed.
std::string stamp(const Config& config, const std::string& command) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config.hash()));
  return "lwe " + command + " | config=" + hex +
         " seed=" + std::to_string(config.get_u64("seed", 1));
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

std::string output_path(const Config& config, const std::string& name) {
  std::filesystem::path dir(config.get("output_dir", "."));
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// The stoplist and the stem rules jointly define tokenization; swapping one
// half silently desynchronizes index and queries, so both must be overridden
// together or not at all.
Analyzer make_analyzer(const Config& config) {
  const bool has_stop = config.has("stoplist");
  const bool has_rules = config.has("stem_rules");
  if (has_stop != has_rules)
    throw UsageError("stoplist and stem_rules must be overridden together");
  if (!has_stop) return Analyzer::standard();
  return Analyzer::from_files(config.require("stoplist"), config.require("stem_rules"));
}

struct EmbeddingSource {
  enum class Kind { train_local, train_global, load_file };
  Kind kind = Kind::train_local;
  std::string path;
  EmbeddingFormat format = EmbeddingFormat::w2v_text;
  std::string spelling;  // the config value, for messages and tags
};

EmbeddingSource parse_embedding_source(const std::string& text) {
  EmbeddingSource source;
  source.spelling = text;
  if (text == "train-local") {
    source.kind = EmbeddingSource::Kind::train_local;
    return source;
  }
  if (text == "train-global") {
    source.kind = EmbeddingSource::Kind::train_global;
    return source;
  }
  if (text.rfind("load:", 0) == 0) {
    const std::string rest = text.substr(5);
    const size_t colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0)
      throw UsageError("embedding source '" + text + "' must look like load:<path>:<glove|w2v>");
    source.kind = EmbeddingSource::Kind::load_file;
    source.path = rest.substr(0, colon);
    const std::string fmt = rest.substr(colon + 1);
    if (fmt == "glove") {
      source.format = EmbeddingFormat::glove_text;
    } else if (fmt == "w2v") {
      source.format = EmbeddingFormat::w2v_text;
    } else {
      throw UsageError("unknown embedding format '" + fmt + "' (expected glove or w2v)");
    }
    return source;
  }
  throw UsageError("unknown embedding source '" + text +
                   "' (expected train-local, train-global, or load:<path>:<format>)");
}

// Both run files of a `run` invocation carry the same tag so that the
// lambda = 1 reduction yields byte-identical files; the tag itself names the
// embedding source behind the expansion.
std::string run_tag(const Config& config, const EmbeddingSource& source) {
  if (config.has("tag")) return config.require("tag");
  switch (source.kind) {
    case EmbeddingSource::Kind::train_local:
      return "lwe-local";
    case EmbeddingSource::Kind::train_global:
      return "lwe-global";
    case EmbeddingSource::Kind::load_file: {
      std::string tag = "lwe-";
      for (char c : std::filesystem::path(source.path).stem().string()) {
        const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                          c == '-';
        tag += keep ? c : '-';
      }
      return tag == "lwe-" ? "lwe-file" : tag;
    }
  }
  return "lwe";
}

TrainConfig make_train_config(const Config& config, uint64_t seed, size_t default_min_count) {
  TrainConfig tc;
  tc.dim = config.get_size("dim", tc.dim);
  tc.window = config.get_size("window", tc.window);
  tc.negatives = config.get_size("negatives", tc.negatives);
  tc.learning_rate = config.get_double("alpha", tc.learning_rate);
  tc.iterations = config.get_size("iterations", tc.iterations);
  tc.sample_count = config.get_size("sample_count", tc.sample_count);
  tc.subsample = config.get_double("subsample", tc.subsample);
  tc.min_count = config.get_size("min_count", default_min_count);
  tc.threads = config.get_size("train_threads", 1);
  tc.resample_each_pass = config.get_bool("resample_each_pass", false);
  tc.seed = seed;
  return tc;
}

// Rare terms are kept for local models (the sample is small and topical) but
// pruned from global ones, where hapaxes are mostly noise.
constexpr size_t kLocalMinCount = 1;
constexpr size_t kGlobalMinCount = 5;

// `salt` isolates the random streams of independently trained embeddings
// under one run seed; per-query training salts with the query id.
TrainResult train_local(const RankedList& baseline, const Index& index, const Config& config,
                        const std::string& salt, std::optional<double> alpha_override) {
  TrainConfig tc = make_train_config(config, mix64(config.get_u64("seed", 1) ^ fnv1a(salt)),
                                     kLocalMinCount);
  if (alpha_override) tc.learning_rate = *alpha_override;
  const DocPosterior posterior = doc_posterior(baseline, config.get_double("temperature", 1.0));
  return train(posterior_sampler(posterior, tc.sample_count), index, tc);
}

TrainResult train_global(const Index& index, const Config& config) {
  TrainConfig tc = make_train_config(config, mix64(config.get_u64("seed", 1) ^ fnv1a("global")),
                                     kGlobalMinCount);
  return train(all_docs_sampler(index), index, tc);
}

SimilarityMode parse_similarity(const Config& config) {
  const std::string mode = config.get("similarity", "dot");
  if (mode == "dot") return SimilarityMode::dot;
  if (mode == "cosine") return SimilarityMode::cosine;
  throw UsageError("unknown similarity mode '" + mode + "' (expected dot or cosine)");
}

// Runs body(0..count-1) on up to `workers` threads. Results must land in
// preallocated slots; the first exception is rethrown after all threads join.
void parallel_for(size_t count, size_t workers, const std::function<void(size_t)>& body) {
  workers = std::max<size_t>(1, std::min(workers, count));
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<Document> read_query_file(const std::string& path) {
  std::vector<Document> queries = read_corpus_file(path);
  std::set<std::string> seen;
  for (const Document& q : queries)
    if (!seen.insert(q.id).second) throw DataError(path + ": duplicate query id: " + q.id);
  return queries;
}

// Paired per-query scores for two reports, aligned on the queries both
// evaluate; map iteration makes the pairing order reproducible.
struct PairedScores {
  std::vector<double> a;
  std::vector<double> b;
  size_t size() const { return a.size(); }
};

PairedScores pair_ndcg(const EvalReport& ra, const EvalReport& rb) {
  PairedScores paired;
  for (const auto& [qid, score] : ra.ndcg) {
    auto it = rb.ndcg.find(qid);
    if (it == rb.ndcg.end()) continue;
    paired.a.push_back(score);
    paired.b.push_back(it->second);
  }
  return paired;
}

std::string wilcoxon_cell(const PairedScores& paired) {
  if (paired.size() < 6) return "n/a (fewer than 6 paired queries)";
  try {
    return format_metric(wilcoxon_signed_rank(paired.a, paired.b));
  } catch (const std::invalid_argument& e) {
    return std::string("n/a (") + e.what() + ")";
  }
}

struct QueryState {
  Query query;
  RankedList baseline;
  RankedList expanded;
  std::string skip_reason;                        // nonempty: no ranking produced
  std::string note;                               // nonempty: expansion fell back
  std::map<std::string, double> expansion_probs;  // final expansion model dump
  CVParams applied;
  bool tuned = false;
};

// Everything cmd_run precomputes per query before parameters enter the
// picture. For local sources the expansion weights depend on the learning
// rate, so they are cached per alpha; file and global sources train (or
// load) once and one weight map serves the whole grid.
struct ExpansionCache {
  bool expandable = false;
  std::string note;
  std::map<double, std::map<std::string, double>> by_alpha;
  std::map<std::string, double> shared;
};

std::map<std::string, double> weights_for(const Query& query, const RankedList& baseline,
                                          const EmbeddingMatrix& E, const Analyzer& analyzer,
                                          const Index& index, SimilarityMode mode) {
  const QueryTermVector qv = query_term_vector(query, E, analyzer.stemmer());
  const auto candidates = expansion_candidates(baseline, index, E, analyzer.stemmer());
  return expansion_weights(E, qv, candidates, mode);
}

RankedList apply_expansion(const Query& query, const RankedList& baseline,
                           const std::map<std::string, double>& weights, const CVParams& p,
                           EmbeddingOrigin origin, const Index& index, double mu,
                           std::map<std::string, double>* probs_out) {
  const ExpansionModel model = expansion_lm(weights, p.k, origin);
  const LanguageModel mixed = interpolate(query.lm, model.lm, p.lambda);
  if (probs_out) *probs_out = model.lm.probs();
  return rescore(baseline, mixed, index, mu);
}

void write_expansion_dump(const std::string& path, const std::string& header,
                          const std::vector<QueryState>& states) {
  std::ofstream out = open_output(path);
  out << "# " << header << "\n";
  out << "# query\tterm\tprob\n";
  for (const QueryState& st : states) {
    // probability descending, term ascending: the reading order of the dump
    std::vector<std::pair<std::string, double>> rows(st.expansion_probs.begin(),
                                                     st.expansion_probs.end());
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [term, prob] : rows)
      out << st.query.id << '\t' << term << '\t' << format_exact(prob) << "\n";
  }
  if (!out) throw DataError("failed writing " + path);
}

void write_pr_curves(const std::string& path, const std::string& header,
                     const EvalReport& baseline, const EvalReport& expanded) {
  std::ofstream out = open_output(path);
  out << "# " << header << "\n";
  out << "# recall\tbaseline\texpanded\n";
  for (size_t level = 0; level < baseline.pr_curve.size(); ++level) {
    out << format_metric(0.1 * static_cast<double>(level)) << '\t'
        << format_metric(baseline.pr_curve[level]) << '\t'
        << format_metric(expanded.pr_curve[level]) << "\n";
  }
  if (!out) throw DataError("failed writing " + path);
}

void write_report(const std::string& path, const std::string& header,
                  const EvalReport& baseline, const EvalReport& expanded,
                  const std::vector<QueryState>& states) {
  std::ofstream out = open_output(path);
  out << "# " << header << "\n";
  out << "mean_ndcg10\tbaseline\t" << format_metric(baseline.mean_ndcg) << "\n";
  out << "mean_ndcg10\texpanded\t" << format_metric(expanded.mean_ndcg) << "\n";
  out << "wilcoxon_p\tbaseline-vs-expanded\t" << wilcoxon_cell(pair_ndcg(baseline, expanded))
      << "\n";
  for (const auto& [qid, score] : baseline.ndcg) {
    auto it = expanded.ndcg.find(qid);
    if (it == expanded.ndcg.end()) continue;
    out << "query_ndcg10\t" << qid << '\t' << format_metric(score) << '\t'
        << format_metric(it->second) << "\n";
  }
  for (const QueryState& st : states) {
    if (!st.skip_reason.empty())
      out << "skipped\t" << st.query.id << '\t' << st.skip_reason << "\n";
  }
  for (const std::string& qid : expanded.skipped)
    out << "skipped\t" << qid << "\tno positive judgments\n";
  for (const QueryState& st : states) {
    if (!st.note.empty()) out << "note\t" << st.query.id << '\t' << st.note << "\n";
  }
  if (!out) throw DataError("failed writing " + path);
}

std::string format_params(const CVParams& p) {
  return "k=" + std::to_string(p.k) + " lambda=" + format_metric(p.lambda) +
         " alpha=" + format_metric(p.alpha);
}

CVGrid make_grid(const Config& config) {
  CVGrid grid;
  if (config.has("cv_k")) {
    grid.k_values.clear();
    for (double v : config.get_list("cv_k", {})) {
      if (v < 1.0 || v != std::floor(v))
        throw UsageError("cv_k entries must be positive integers");
      grid.k_values.push_back(static_cast<size_t>(v));
    }
  }
  if (config.has("cv_lambda")) grid.lambda_values = config.get_list("cv_lambda", {});
  if (config.has("cv_alpha")) grid.alpha_values = config.get_list("cv_alpha", {});
  grid.folds = config.get_size("folds", grid.folds);
  if (grid.k_values.empty() || grid.lambda_values.empty() || grid.alpha_values.empty())
    throw UsageError("cross-validation grid has an empty dimension");
  if (grid.folds < 2) throw UsageError("cross-validation needs at least 2 folds");
  return grid;
}

}  // namespace

void write_run_file(const std::string& path, const std::vector<RankedList>& run,
                    const std::string& tag, const std::string& header) {
  std::ofstream out = open_output(path);
  if (!header.empty()) out << "# " << header << "\n";
  for (const RankedList& list : run) {
    size_t rank = 1;
    for (const ScoredDoc& doc : list.docs) {
      out << list.query_id << " Q0 " << doc.doc_id << ' ' << rank++ << ' '
          << format_exact(doc.score) << ' ' << tag << "\n";
    }
  }
  if (!out) throw DataError("failed writing " + path);
}

std::vector<RankedList> read_run_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run file: " + path);
  std::vector<RankedList> run;
  std::map<std::string, size_t> slot;  // query id -> position in `run`
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);
    std::istringstream fields(line);
    std::string qid, q0, doc_id, rank_text, score_text, tag;
    if (!(fields >> qid >> q0 >> doc_id >> rank_text >> score_text >> tag))
      throw DataError(where + ": expected 6 whitespace-separated fields");
    std::string extra;
    if (fields >> extra) throw DataError(where + ": trailing fields");
    double score = 0.0;
    size_t used = 0;
    try {
      score = std::stod(score_text, &used);
    } catch (const std::exception&) {
      throw DataError(where + ": unparsable score: " + score_text);
    }
    if (used != score_text.size() || !std::isfinite(score))
      throw DataError(where + ": unparsable score: " + score_text);
    auto [it, fresh] = slot.try_emplace(qid, run.size());
    if (fresh) run.push_back(RankedList{qid, {}});
    run[it->second].docs.push_back({doc_id, score});
  }
  return run;
}

int cmd_index(const Config& config) {
  const Analyzer analyzer = make_analyzer(config);
  const std::vector<Document> docs = read_corpus_file(config.require("corpus"));
  const Index index = build_index(docs, analyzer);
  std::string path = config.get("index", "");
  if (path.empty()) path = output_path(config, "index.lwe");
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  index.save(path, stamp(config, "index"));
  std::cout << "indexed " << index.doc_count() << " documents, " << index.vocabulary().size()
            << " terms, " << index.total_tokens() << " tokens -> " << path << "\n";
  return 0;
}

int cmd_run(const Config& config, bool cross_validate_params) {
  const Analyzer analyzer = make_analyzer(config);
  const Index index = Index::load(config.require("index"));
  const std::vector<Document> query_rows = read_query_file(config.require("queries"));
  const double mu = config.get_double("mu", kDefaultMu);
  const size_t depth = config.get_size("depth", kDefaultDepth);
  if (depth < 1) throw UsageError("depth must be at least 1");
  const uint64_t seed = config.get_u64("seed", 1);
  const size_t workers = config.get_size("workers", 1);
  const SimilarityMode mode = parse_similarity(config);
  const EmbeddingSource source = parse_embedding_source(config.get("embedding", "train-local"));
  const bool local = source.kind == EmbeddingSource::Kind::train_local;
  const EmbeddingOrigin origin =
      local ? EmbeddingOrigin::local_embedding : EmbeddingOrigin::global_embedding;
  const std::string tag = run_tag(config, source);
  const std::string header = stamp(config, cross_validate_params ? "run --cv" : "run");

  std::optional<Qrels> qrels;
  if (config.has("qrels")) qrels = Qrels::from_file(config.require("qrels"));
  if (cross_validate_params && !qrels)
    throw UsageError("cross-validation requires a qrels file");

  // A file or global source is resolved once and shared by every query.
  std::optional<EmbeddingMatrix> shared;
  if (source.kind == EmbeddingSource::Kind::load_file)
    shared = load_embeddings(source.path, source.format);
  else if (source.kind == EmbeddingSource::Kind::train_global)
    shared = train_global(index, config).embedding;

  std::vector<QueryState> states(query_rows.size());
  parallel_for(states.size(), workers, [&](size_t i) {
    QueryState& st = states[i];
    st.query = make_query(query_rows[i].id, query_rows[i].text, analyzer);
    if (st.query.terms.empty()) {
      st.skip_reason = "no query terms survive analysis";
      return;
    }
    st.baseline = retrieve(st.query, index, depth, mu);
    if (st.baseline.docs.empty()) st.skip_reason = "no indexed document matches the query";
  });

  if (!cross_validate_params) {
    CVParams params;
    params.k = config.get_size("k", 50);
    params.lambda = config.get_double("lambda", 0.5);
    params.alpha = config.get_double("alpha", TrainConfig{}.learning_rate);
    if (params.lambda < 0.0 || params.lambda > 1.0)
      throw UsageError("lambda must lie in [0, 1]");
    if (params.k < 1) throw UsageError("k must be at least 1");

    parallel_for(states.size(), workers, [&](size_t i) {
      QueryState& st = states[i];
      if (!st.skip_reason.empty()) return;
      try {
        const EmbeddingMatrix* E = shared ? &*shared : nullptr;
        EmbeddingMatrix own;
        if (!E) {
          own = train_local(st.baseline, index, config, st.query.id, std::nullopt).embedding;
          E = &own;
        }
        const auto weights = weights_for(st.query, st.baseline, *E, analyzer, index, mode);
        st.expanded = apply_expansion(st.query, st.baseline, weights, params, origin, index, mu,
                                      &st.expansion_probs);
      } catch (const DataError& e) {
        st.note = std::string("expansion fell back to the baseline: ") + e.what();
        st.expanded = st.baseline;
        st.expansion_probs.clear();
      }
    });
  } else {
    const CVGrid grid = make_grid(config);

    // Weight maps are the per-query quantity every grid point reuses; only
    // the learning rate reaches back into training, so local sources cache
    // one embedding's weights per alpha.
    std::vector<ExpansionCache> caches(states.size());
    parallel_for(states.size(), workers, [&](size_t i) {
      QueryState& st = states[i];
      ExpansionCache& cache = caches[i];
      if (!st.skip_reason.empty()) return;
      try {
        if (local) {
          for (double alpha : grid.alpha_values) {
            const EmbeddingMatrix E =
                train_local(st.baseline, index, config, st.query.id, alpha).embedding;
            cache.by_alpha[alpha] = weights_for(st.query, st.baseline, E, analyzer, index, mode);
          }
        } else {
          cache.shared = weights_for(st.query, st.baseline, *shared, analyzer, index, mode);
        }
        cache.expandable = true;
      } catch (const DataError& e) {
        cache.note = std::string("expansion fell back to the baseline: ") + e.what();
      }
    });

    std::map<std::string, size_t> index_of;
    std::vector<std::string> cv_ids;
    for (size_t i = 0; i < states.size(); ++i) {
      if (!states[i].skip_reason.empty()) continue;
      index_of[states[i].query.id] = i;
      cv_ids.push_back(states[i].query.id);
    }

    const SystemFn system = [&](const std::string& qid, const CVParams& p) -> RankedList {
      const size_t i = index_of.at(qid);
      const QueryState& st = states[i];
      const ExpansionCache& cache = caches[i];
      if (!cache.expandable) return st.baseline;
      const auto& weights = local ? cache.by_alpha.at(p.alpha) : cache.shared;
      try {
        return apply_expansion(st.query, st.baseline, weights, p, origin, index, mu, nullptr);
      } catch (const DataError&) {
        return st.baseline;
      }
    };

    const CVOutcome outcome = cross_validate(system, cv_ids, *qrels, grid, seed);

    for (QueryState& st : states) {
      if (!st.skip_reason.empty()) continue;
      auto chosen = outcome.params.find(st.query.id);
      if (chosen == outcome.params.end()) {
        // No judgments to tune on: ship the baseline ranking for this query.
        st.expanded = st.baseline;
        if (st.note.empty()) st.note = "not cross-validated: no positive judgments";
        continue;
      }
      st.applied = chosen->second;
      st.tuned = true;
      const ExpansionCache& cache = caches[index_of.at(st.query.id)];
      if (!cache.expandable) {
        st.note = cache.note;
        st.expanded = st.baseline;
        continue;
      }
      const auto& weights = local ? cache.by_alpha.at(st.applied.alpha) : cache.shared;
      try {
        st.expanded = apply_expansion(st.query, st.baseline, weights, st.applied, origin, index,
                                      mu, &st.expansion_probs);
      } catch (const DataError& e) {
        st.note = std::string("expansion fell back to the baseline: ") + e.what();
        st.expanded = st.baseline;
        st.expansion_probs.clear();
      }
    }

    const std::string cv_path = output_path(config, "cv_report.tsv");
    std::ofstream cv_out = open_output(cv_path);
    cv_out << "# " << header << "\n";
    for (size_t f = 0; f < outcome.folds.size(); ++f) {
      const CVParams& p = outcome.fold_params[f];
      cv_out << "fold\t" << f << '\t' << p.k << '\t' << format_metric(p.lambda) << '\t'
             << format_metric(p.alpha) << '\t';
      for (size_t j = 0; j < outcome.folds[f].size(); ++j)
        cv_out << (j ? "," : "") << outcome.folds[f][j];
      cv_out << "\n";
    }
    for (const auto& [qid, score] : outcome.ndcg) {
      const CVParams& p = outcome.params.at(qid);
      cv_out << "query_params\t" << qid << '\t' << p.k << '\t' << format_metric(p.lambda) << '\t'
             << format_metric(p.alpha) << '\t' << format_metric(score) << "\n";
    }
    cv_out << "mean_ndcg10\tcross-validated\t" << format_metric(outcome.mean_ndcg) << "\n";
    for (const std::string& qid : outcome.skipped)
      cv_out << "skipped\t" << qid << "\tno positive judgments\n";
    if (!cv_out) throw DataError("failed writing " + cv_path);

    std::cout << "cross-validated " << outcome.ndcg.size() << " queries over "
              << outcome.folds.size() << " folds, mean NDCG@10 "
              << format_metric(outcome.mean_ndcg) << "\n";
    for (size_t f = 0; f < outcome.fold_params.size(); ++f)
      std::cout << "fold " << f << ": " << format_params(outcome.fold_params[f]) << "\n";
  }

  std::vector<RankedList> baseline_run;
  std::vector<RankedList> expanded_run;
  size_t skipped = 0;
  for (const QueryState& st : states) {
    if (!st.skip_reason.empty()) {
      ++skipped;
      continue;
    }
    baseline_run.push_back(st.baseline);
    expanded_run.push_back(st.expanded);
  }

  const std::string baseline_path = output_path(config, "baseline.run");
  const std::string expanded_path = output_path(config, "expanded.run");
  write_run_file(baseline_path, baseline_run, tag, header);
  write_run_file(expanded_path, expanded_run, tag, header);
  write_expansion_dump(output_path(config, "expansion_terms.tsv"), header, states);

  std::cout << "ran " << states.size() << " queries (" << skipped << " skipped) -> "
            << baseline_path << ", " << expanded_path << "\n";

  if (qrels) {
    const EvalReport baseline_report = evaluate_run(baseline_run, *qrels);
    const EvalReport expanded_report = evaluate_run(expanded_run, *qrels);
    write_report(output_path(config, "report.tsv"), header, baseline_report, expanded_report,
                 states);
    write_pr_curves(output_path(config, "pr_curve.tsv"), header, baseline_report,
                    expanded_report);
    std::cout << "baseline mean NDCG@10 " << format_metric(baseline_report.mean_ndcg) << " over "
              << baseline_report.ndcg.size() << " queries\n";
    std::cout << "expanded mean NDCG@10 " << format_metric(expanded_report.mean_ndcg) << "\n";
    std::cout << "wilcoxon p " << wilcoxon_cell(pair_ndcg(baseline_report, expanded_report))
              << "\n";
  }
  return 0;
}

int cmd_eval(const Config& config) {
  const Qrels qrels = Qrels::from_file(config.require("qrels"));
  const std::vector<RankedList> run = read_run_file(config.require("run"));
  const EvalReport report = evaluate_run(run, qrels);
  const std::string header = stamp(config, "eval");

  std::optional<EvalReport> baseline;
  if (config.has("baseline"))
    baseline = evaluate_run(read_run_file(config.require("baseline")), qrels);

  const std::string path = output_path(config, "eval.tsv");
  std::ofstream out = open_output(path);
  out << "# " << header << "\n";
  out << "mean_ndcg10\trun\t" << format_metric(report.mean_ndcg) << "\n";
  if (baseline) {
    out << "mean_ndcg10\tbaseline\t" << format_metric(baseline->mean_ndcg) << "\n";
    out << "wilcoxon_p\trun-vs-baseline\t" << wilcoxon_cell(pair_ndcg(*baseline, report))
        << "\n";
  }
  for (const auto& [qid, score] : report.ndcg) {
    out << "query_ndcg10\t" << qid << '\t' << format_metric(score);
    if (baseline) {
      auto it = baseline->ndcg.find(qid);
      out << '\t' << (it == baseline->ndcg.end() ? "n/a" : format_metric(it->second));
    }
    out << "\n";
  }
  for (size_t level = 0; level < report.pr_curve.size(); ++level) {
    out << "pr\t" << format_metric(0.1 * static_cast<double>(level)) << '\t'
        << format_metric(report.pr_curve[level]);
    if (baseline) out << '\t' << format_metric(baseline->pr_curve[level]);
    out << "\n";
  }
  for (const std::string& qid : report.skipped)
    out << "skipped\t" << qid << "\tno positive judgments\n";
  if (!out) throw DataError("failed writing " + path);

  std::cout << "mean NDCG@10 " << format_metric(report.mean_ndcg) << " over "
            << report.ndcg.size() << " queries (" << report.skipped.size() << " skipped) -> "
            << path << "\n";
  if (baseline)
    std::cout << "baseline mean NDCG@10 " << format_metric(baseline->mean_ndcg)
              << ", wilcoxon p " << wilcoxon_cell(pair_ndcg(*baseline, report)) << "\n";
  return 0;
}

int cmd_diagnose(const Config& config) {
  const Index index = Index::load(config.require("index"));
  const Analyzer analyzer = make_analyzer(config);
  const LanguageModel p_c = corpus_lm(index);
  const std::string posterior_mode = config.get("posterior", "retrieval");
  if (posterior_mode != "retrieval" && posterior_mode != "relevance")
    throw UsageError("posterior must be retrieval or relevance");
  const bool from_relevance = posterior_mode == "relevance";
  const double mu = config.get_double("mu", kDefaultMu);
  const size_t depth = config.get_size("depth", kDefaultDepth);
  const double temperature = config.get_double("temperature", 1.0);
  const size_t workers = config.get_size("workers", 1);
  const std::string header = stamp(config, "diagnose");

  std::optional<Qrels> qrels;
  if (config.has("qrels")) qrels = Qrels::from_file(config.require("qrels"));
  if (from_relevance && !qrels)
    throw UsageError("relevance posteriors require a qrels file");

  // Query list: the queries file when given; otherwise, for relevance
  // posteriors, every judged query (with no text, so no neighbor tables).
  std::vector<Document> query_rows;
  if (config.has("queries")) {
    query_rows = read_query_file(config.require("queries"));
  } else if (from_relevance) {
    for (const auto& [qid, docs] : qrels->judgments()) query_rows.push_back({qid, ""});
  } else {
    throw UsageError("retrieval posteriors require a queries file");
  }

  const bool compare_embeddings = config.has("embedding") || config.has("compare");
  if (config.has("embedding") != config.has("compare"))
    throw UsageError("embedding and compare must be given together");
  std::optional<EmbeddingSource> primary_source;
  std::optional<EmbeddingSource> compare_source;
  std::optional<EmbeddingMatrix> primary_shared;
  std::optional<EmbeddingMatrix> compare_shared;
  const size_t neighbor_k = config.get_size("neighbor_k", 10);
  if (compare_embeddings) {
    primary_source = parse_embedding_source(config.require("embedding"));
    compare_source = parse_embedding_source(config.require("compare"));
    const auto resolve_shared = [&](const EmbeddingSource& s) -> std::optional<EmbeddingMatrix> {
      if (s.kind == EmbeddingSource::Kind::load_file)
        return load_embeddings(s.path, s.format);
      if (s.kind == EmbeddingSource::Kind::train_global) return train_global(index, config).embedding;
      return std::nullopt;
    };
    primary_shared = resolve_shared(*primary_source);
    compare_shared = resolve_shared(*compare_source);
  }

  struct DiagState {
    std::string qid;
    std::optional<Query> query;  // present only when query text was given
    std::string skip_reason;
    TopicModel topic;
    ImportanceWeights omega;
    PointwiseKl pointwise;
    double clarity_value = 0.0;
    std::map<double, size_t> histogram;  // log10(omega) bin lower edge -> count
    std::vector<std::string> neighbor_rows;
    bool ok = false;
  };
  std::vector<DiagState> states(query_rows.size());

  parallel_for(states.size(), workers, [&](size_t i) {
    DiagState& st = states[i];
    st.qid = query_rows[i].id;
    DocPosterior posterior;
    RankedList ranked;
    if (!query_rows[i].text.empty()) {
      Query q = make_query(st.qid, query_rows[i].text, analyzer);
      if (!q.terms.empty()) st.query = std::move(q);
    }
    if (from_relevance) {
      try {
        posterior = relevance_posterior(st.qid, *qrels, index);
      } catch (const DataError& e) {
        st.skip_reason = e.what();
        return;
      }
    } else {
      if (!st.query) {
        st.skip_reason = "no query terms survive analysis";
        return;
      }
      ranked = retrieve(*st.query, index, depth, mu);
      if (ranked.docs.empty()) {
        st.skip_reason = "no indexed document matches the query";
        return;
      }
      posterior = doc_posterior(ranked, temperature);
    }
    try {
      st.topic = local_unigram(posterior, index);
    } catch (const DataError& e) {
      st.skip_reason = e.what();
      return;
    }
    st.omega = importance_weights(st.topic, p_c);
    st.pointwise = pointwise_kl(st.topic, p_c);
    st.clarity_value = clarity(st.topic, p_c);
    for (const TermDivergence& td : st.pointwise.terms) {
      double lo = std::floor(std::log10(st.omega.omega.at(td.term)) / 0.5) * 0.5;
      if (lo == 0.0) lo = 0.0;  // normalize -0.0
      ++st.histogram[lo];
    }

    if (compare_embeddings && st.query) {
      // Both train-local sides would train the same model here: the salt is
      // the query id either way, which is the intended meaning.
      const auto side_matrix =
          [&](const std::optional<EmbeddingMatrix>& shared_side) -> EmbeddingMatrix {
        if (shared_side) return *shared_side;
        return train_local(ranked, index, config, st.qid, std::nullopt).embedding;
      };
      // Local training needs a retrieval posterior; a relevance-mode run
      // with a train-local side has nothing to train from.
      const bool needs_ranked = (!primary_shared || !compare_shared) && from_relevance;
      if (needs_ranked) {
        st.neighbor_rows.push_back("note\t" + st.qid +
                                   "\ttrain-local sides need retrieval posteriors");
      } else {
        const EmbeddingMatrix a = side_matrix(primary_shared);
        const EmbeddingMatrix b = side_matrix(compare_shared);
        std::set<std::string> terms(st.query->terms.begin(), st.query->terms.end());
        for (const std::string& term : terms) {
          const NeighborComparison cmp = compare_neighbors(a, b, term, neighbor_k);
          const auto emit = [&](const char* side, const std::optional<std::vector<Neighbor>>& n) {
            if (!n) {
              st.neighbor_rows.push_back("note\t" + st.qid + "\t" + term +
                                         " out of vocabulary on the " + side + " side");
              return;
            }
            size_t rank = 1;
            for (const Neighbor& nb : *n)
              st.neighbor_rows.push_back("neighbor\t" + st.qid + '\t' + term + '\t' + side +
                                         '\t' + std::to_string(rank++) + '\t' + nb.term + '\t' +
                                         format_metric(nb.similarity));
          };
          emit("primary", cmp.global_side);
          emit("compare", cmp.local_side);
        }
      }
    }
    st.ok = true;
  });

  const std::string diag_path = output_path(config, "diagnostics.tsv");
  std::ofstream diag = open_output(diag_path);
  diag << "# " << header << "\n";
  diag << "# query\tterm\tomega\tpointwise_kl\n";
  for (const DiagState& st : states) {
    if (!st.ok) continue;
    for (const TermDivergence& td : st.pointwise.terms)
      diag << st.qid << '\t' << td.term << '\t' << format_exact(st.omega.omega.at(td.term))
           << '\t' << format_exact(td.value) << "\n";
  }
  if (!diag) throw DataError("failed writing " + diag_path);

  const std::string clarity_path = output_path(config, "clarity.tsv");
  std::ofstream cl = open_output(clarity_path);
  cl << "# " << header << "\n";
  for (const DiagState& st : states) {
    if (!st.ok) continue;
    cl << "clarity\t" << st.qid << '\t' << format_exact(st.clarity_value) << '\t'
       << st.topic.source << "\n";
  }
  for (const DiagState& st : states) {
    if (!st.ok) continue;
    for (const auto& [lo, count] : st.histogram)
      cl << "omega_hist\t" << st.qid << '\t' << format_metric(lo) << '\t' << count << "\n";
  }
  for (const DiagState& st : states) {
    if (!st.skip_reason.empty()) cl << "skipped\t" << st.qid << '\t' << st.skip_reason << "\n";
  }

  // Clarity against the per-query gain of one run over another: the wiring
  // for checking whether topical coherence predicts expansion success.
  if (config.has("run") != config.has("baseline"))
    throw UsageError("run and baseline must be given together");
  if (config.has("run")) {
    if (!qrels) throw UsageError("the clarity correlation requires a qrels file");
    const EvalReport run_report = evaluate_run(read_run_file(config.require("run")), *qrels);
    const EvalReport base_report =
        evaluate_run(read_run_file(config.require("baseline")), *qrels);
    std::vector<double> clarity_values;
    std::vector<double> improvements;
    for (const DiagState& st : states) {
      if (!st.ok) continue;
      auto a = run_report.ndcg.find(st.qid);
      auto b = base_report.ndcg.find(st.qid);
      if (a == run_report.ndcg.end() || b == base_report.ndcg.end()) continue;
      clarity_values.push_back(st.clarity_value);
      improvements.push_back(a->second - b->second);
    }
    cl << "correlation\tqueries\t" << clarity_values.size() << "\n";
    try {
      const RankCorrelation corr = rank_correlations(clarity_values, improvements);
      cl << "correlation\tkendall_tau\t" << format_metric(corr.tau) << "\n";
      cl << "correlation\tspearman_rho\t" << format_metric(corr.rho) << "\n";
    } catch (const std::exception& e) {
      cl << "correlation\tundefined\t" << e.what() << "\n";
    }
  }
  if (!cl) throw DataError("failed writing " + clarity_path);

  if (compare_embeddings) {
    const std::string nb_path = output_path(config, "neighbors.tsv");
    std::ofstream nb = open_output(nb_path);
    nb << "# " << header << "\n";
    nb << "# neighbor\tquery\tterm\tside\trank\tneighbor\tsimilarity\n";
    for (const DiagState& st : states)
      for (const std::string& row : st.neighbor_rows) nb << row << "\n";
    if (!nb) throw DataError("failed writing " + nb_path);
  }

  size_t diagnosed = 0;
  for (const DiagState& st : states) diagnosed += st.ok ? 1 : 0;
  std::cout << "diagnosed " << diagnosed << " of " << states.size() << " queries -> "
            << diag_path << ", " << clarity_path << "\n";
  return 0;
}

namespace {

// Resolves a source for the standalone embedding commands. Local training
// retrieves with the query text given in the config; the text also salts the
// training seed.
EmbeddingMatrix resolve_embedding(const EmbeddingSource& source, const Config& config,
                                  const Index* index, const Analyzer& analyzer,
                                  std::vector<double>* pass_loss) {
  if (source.kind == EmbeddingSource::Kind::load_file)
    return load_embeddings(source.path, source.format);
  if (!index) throw UsageError("training an embedding requires an index");
  if (source.kind == EmbeddingSource::Kind::train_global) {
    TrainResult result = train_global(*index, config);
    if (pass_loss) *pass_loss = result.pass_loss;
    return std::move(result.embedding);
  }
  const std::string text = config.require("query");
  const Query query = make_query("q", text, analyzer);
  if (query.terms.empty()) throw DataError("query has no analyzable terms: " + text);
  const double mu = config.get_double("mu", kDefaultMu);
  const size_t depth = config.get_size("depth", kDefaultDepth);
  const RankedList baseline = retrieve(query, *index, depth, mu);
  if (baseline.docs.empty()) throw DataError("query matches no indexed documents: " + text);
  TrainResult result = train_local(baseline, *index, config, text, std::nullopt);
  if (pass_loss) *pass_loss = result.pass_loss;
  return std::move(result.embedding);
}

}  // namespace

int cmd_neighbors(const Config& config) {
  const std::string term = config.require("term");
  // same key as diagnose; plain "k" belongs to expansion and must not leak here
  const size_t k = config.get_size("neighbor_k", 10);
  const Analyzer analyzer = make_analyzer(config);
  std::optional<Index> index;
  if (config.has("index")) index = Index::load(config.require("index"));
  const Index* index_ptr = index ? &*index : nullptr;
  const std::string header = stamp(config, "neighbors");

  const EmbeddingSource source = parse_embedding_source(config.require("embedding"));
  const EmbeddingMatrix primary = resolve_embedding(source, config, index_ptr, analyzer, nullptr);

  const std::string path = output_path(config, "neighbors.tsv");
  std::ofstream out = open_output(path);
  out << "# " << header << "\n";
  out << "# side\trank\tterm\tsimilarity\n";

  const auto emit = [&](const std::string& side, const std::vector<Neighbor>& list) {
    size_t rank = 1;
    for (const Neighbor& nb : list) {
      out << side << '\t' << rank << '\t' << nb.term << '\t' << format_metric(nb.similarity)
          << "\n";
      std::cout << side << " #" << rank << ": " << nb.term << " ("
                << format_metric(nb.similarity) << ")\n";
      ++rank;
    }
  };

  if (config.has("compare")) {
    const EmbeddingSource other = parse_embedding_source(config.require("compare"));
    const EmbeddingMatrix secondary =
        resolve_embedding(other, config, index_ptr, analyzer, nullptr);
    const NeighborComparison cmp = compare_neighbors(primary, secondary, term, k);
    const auto emit_side = [&](const std::string& side,
                               const std::optional<std::vector<Neighbor>>& list) {
      if (!list) {
        out << side << "\t-\t" << term << "\tout of vocabulary\n";
        std::cout << side << ": " << term << " out of vocabulary\n";
        return;
      }
      emit(side, *list);
    };
    emit_side("primary", cmp.global_side);
    emit_side("compare", cmp.local_side);
  } else {
    emit("primary", neighbors(primary, term, k));
  }
  if (!out) throw DataError("failed writing " + path);
  return 0;
}

int cmd_train_embedding(const Config& config) {
  const EmbeddingSource source =
      parse_embedding_source(config.get("embedding", "train-global"));
  if (source.kind == EmbeddingSource::Kind::load_file)
    throw UsageError("train-embedding trains; use embedding=train-local or train-global");
  const Analyzer analyzer = make_analyzer(config);
  const Index index = Index::load(config.require("index"));
  std::vector<double> pass_loss;
  const EmbeddingMatrix embedding =
      resolve_embedding(source, config, &index, analyzer, &pass_loss);

  std::string path = config.get("embedding_out", "");
  if (path.empty()) path = output_path(config, "embedding.w2v");
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  save_embeddings(embedding, path, stamp(config, "train-embedding"));

  std::cout << "trained " << embedding.vocab.size() << " x " << embedding.dim
            << " embedding -> " << path << "\n";
  if (!pass_loss.empty())
    std::cout << "pass loss " << format_metric(pass_loss.front()) << " -> "
              << format_metric(pass_loss.back()) << " over " << pass_loss.size() << " passes\n";
  return 0;
}

}  // namespace lwe
