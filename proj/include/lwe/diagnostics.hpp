#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lwe/corpus.hpp"
#include "lwe/embedding.hpp"
#include "lwe/evaluation.hpp"
#include "lwe/retrieval.hpp"

namespace lwe {

// Unigram model of a topic, estimated from some weighted document set.
struct TopicModel {
  LanguageModel lm;
  std::string source;  // human-readable description of the document set
};

// p_t(w) = sum_d p(w|d) p(d). Zero-length documents cannot contribute a
// term distribution; they are skipped with a warning and the mixture is
// renormalized over the documents that remain.
TopicModel local_unigram(const DocPosterior& posterior, const Index& index);

// Uniform posterior over the query's judged-relevant documents that exist
// in the index: the judgment-driven alternative to a retrieval posterior.
DocPosterior relevance_posterior(const std::string& query_id, const Qrels& qrels,
                                 const Index& index);

// omega(w) = p_t(w) / p_c(w) for every topic term. Terms the corpus model
// has never seen cannot be weighted and are reported separately instead of
// poisoning the ratios.
struct ImportanceWeights {
  std::map<std::string, double> omega;
  std::vector<std::string> out_of_corpus;
};
ImportanceWeights importance_weights(const TopicModel& p_t, const LanguageModel& p_c);

// D_w = p_t(w) * ln(p_t(w) / p_c(w)), the per-term contribution to
// KL(p_t || p_c), sorted by contribution descending (ties by term).
struct TermDivergence {
  std::string term;
  double value;
};
struct PointwiseKl {
  std::vector<TermDivergence> terms;
  std::vector<std::string> excluded;  // p_t(w) > 0 but p_c(w) = 0
};
PointwiseKl pointwise_kl(const TopicModel& p_t, const LanguageModel& p_c);

// Full KL(p_t || p_c), natural log. Requires the topic support to lie
// inside the corpus support, which holds whenever p_t came from indexed
// documents.
double clarity(const TopicModel& p_t, const LanguageModel& p_c);

// Top-k neighbor lists for one term under two embeddings. A side where the
// term is out of vocabulary comes back empty-handed rather than failing the
// whole comparison.
struct NeighborComparison {
  std::optional<std::vector<Neighbor>> global_side;
  std::optional<std::vector<Neighbor>> local_side;
};
NeighborComparison compare_neighbors(const EmbeddingMatrix& global_model,
                                     const EmbeddingMatrix& local_model,
                                     const std::string& term, size_t k);

}  // namespace lwe
