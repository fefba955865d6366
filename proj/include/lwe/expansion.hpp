#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lwe/corpus.hpp"
#include "lwe/embedding.hpp"
#include "lwe/retrieval.hpp"

namespace lwe {

// Sparse query vector over the embedding's vocabulary: MLE term frequencies
// of the query terms that resolve to an embedding row, renormalized after
// unresolvable terms are dropped.  Terms resolved through the stem fallback
// are keyed by the vocabulary entry they landed on, so two query terms can
// merge into one entry.
struct QueryTermVector {
  std::map<std::string, double> entries;
};

QueryTermVector query_term_vector(const Query& query, const EmbeddingMatrix& E,
                                  const Stemmer& stemmer);

// Distinct analyzed terms of the documents in the initial retrieval,
// restricted to terms resolvable in E.  Pairs are (index term, embedding
// row), sorted by term.
std::vector<std::pair<std::string, uint32_t>> expansion_candidates(const RankedList& initial,
                                                                   const Index& index,
                                                                   const EmbeddingMatrix& E,
                                                                   const Stemmer& stemmer);

enum class SimilarityMode {
  dot,     // raw inner products, the default
  cosine,  // rows unit-normalized on both sides first
};

// weight(t) = e_t . (E^T q), the candidate-restricted entries of E E^T q.
// Computed as one dim-sized accumulation followed by one dot product per
// candidate; the vocab x vocab product is never formed.  Linear in q: the
// entries need not sum to one.
std::map<std::string, double> expansion_weights(
    const EmbeddingMatrix& E, const QueryTermVector& q,
    const std::vector<std::pair<std::string, uint32_t>>& candidates,
    SimilarityMode mode = SimilarityMode::dot);

enum class EmbeddingOrigin { global_embedding, local_embedding };

struct ExpansionModel {
  LanguageModel lm;
  size_t k_used = 0;  // the k that was requested; lm holds at most this many terms
  EmbeddingOrigin origin = EmbeddingOrigin::global_embedding;
};

// Top-k terms by weight (ties break lexicographically), negative weights
// clipped to zero, then L1-normalized.  All-nonpositive selections are an
// error so callers can fall back to the unexpanded query.
ExpansionModel expansion_lm(const std::map<std::string, double>& weights, size_t k,
                            EmbeddingOrigin origin = EmbeddingOrigin::global_embedding);

// lambda * p_q + (1 - lambda) * p_q_plus over the union support, no
// renormalization.  lambda = 1 reproduces p_q exactly, bit for bit.
LanguageModel interpolate(const LanguageModel& p_q, const LanguageModel& p_q_plus,
                          double lambda);

// Rescores exactly the documents of the initial list under the expanded
// model and re-sorts (score descending, doc id ascending).  Never grows or
// shrinks the list.
RankedList rescore(const RankedList& initial, const LanguageModel& expanded_lm,
                   const Index& index, double mu = kDefaultMu);

}  // namespace lwe
