#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lwe/corpus.hpp"

namespace lwe {

// Dirichlet prior from Indri; reasonable for TREC-sized news collections.
inline constexpr double kDefaultMu = 2500.0;
inline constexpr size_t kDefaultDepth = 1000;

struct Query {
  std::string id;
  std::vector<std::string> terms;  // analyzed, duplicates preserved
  LanguageModel lm;                // MLE over terms
};

// Analyzes the text; a query with no surviving terms has an empty `terms`
// and no model, and callers are expected to skip it.
Query make_query(const std::string& id, const std::string& text, const Analyzer& analyzer);

struct ScoredDoc {
  std::string doc_id;
  double score;
};

struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> docs;  // score descending, ties by doc id ascending
};

// Negated KL divergence between the query model and the Dirichlet-smoothed
// document model, restricted to the query model's support.  0 is the best
// possible score (smoothed document model identical to the query model on
// its support).  Query terms unseen in the collection cannot be smoothed and
// are dropped; if every term drops out the score is undefined.
double ql_score(const LanguageModel& query_lm, uint32_t doc, const Index& index, double mu);
double ql_score(const Query& query, uint32_t doc, const Index& index, double mu);

// Top `depth` documents among those containing at least one query term.
RankedList retrieve(const Query& query, const Index& index, size_t depth = kDefaultDepth,
                    double mu = kDefaultMu);

// Distribution over the documents of a ranked list.
struct DocPosterior {
  std::vector<std::pair<std::string, double>> docs;  // list order preserved
  double prob(const std::string& doc_id) const;
};

// Softmax of retrieval scores over the ranked list's support, stabilized by
// subtracting the maximum score.  temperature scales score differences
// before exponentiation (1 = the retrieval scores as-is).
DocPosterior doc_posterior(const RankedList& ranked, double temperature = 1.0);

// `count` draws with replacement; a seed fixes the draw sequence exactly.
std::vector<std::string> sample_docs(const DocPosterior& posterior, size_t count, uint64_t seed);

}  // namespace lwe
