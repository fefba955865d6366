#include "lwe/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "lwe/util.hpp"

namespace lwe {

namespace {

double dot(std::span<const double> a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

QueryTermVector query_term_vector(const Query& query, const EmbeddingMatrix& E,
                                  const Stemmer& stemmer) {
  StemResolver resolver(E, stemmer);
  std::map<std::string, double> counts;
  double total = 0.0;
  for (const auto& term : query.terms) {
    auto row = resolver.resolve(term);
    if (!row) continue;
    counts[E.vocab[*row]] += 1.0;
    total += 1.0;
  }
  if (counts.empty())
    throw DataError("no query term is covered by the embedding: " + query.id);
  QueryTermVector q;
  for (const auto& [term, c] : counts) q.entries[term] = c / total;
  return q;
}

std::vector<std::pair<std::string, uint32_t>> expansion_candidates(const RankedList& initial,
                                                                   const Index& index,
                                                                   const EmbeddingMatrix& E,
                                                                   const Stemmer& stemmer) {
  std::set<uint32_t> term_ids;
  for (const auto& sd : initial.docs) {
    auto doc = index.doc_index(sd.doc_id);
    if (!doc) throw DataError("retrieved document not in index: " + sd.doc_id);
    for (uint32_t t : index.doc_tokens(*doc)) term_ids.insert(t);
  }
  StemResolver resolver(E, stemmer);
  std::vector<std::pair<std::string, uint32_t>> candidates;
  for (uint32_t t : term_ids) {
    const std::string& term = index.term(t);
    if (auto row = resolver.resolve(term)) candidates.emplace_back(term, *row);
  }
  return candidates;  // term ids ascend lexicographically already
}

std::map<std::string, double> expansion_weights(
    const EmbeddingMatrix& E, const QueryTermVector& q,
    const std::vector<std::pair<std::string, uint32_t>>& candidates, SimilarityMode mode) {
  if (candidates.empty()) throw DataError("no expansion candidates");
  if (q.entries.empty()) throw DataError("empty query term vector");

  std::vector<double> qvec(E.dim, 0.0);
  for (const auto& [term, weight] : q.entries) {
    auto row = E.row_of(term);
    if (!row) throw DataError("query vector term missing from embedding: " + term);
    auto vec = E.input_row(*row);
    double scale = weight;
    if (mode == SimilarityMode::cosine) {
      double n = norm(vec);
      if (n == 0.0) continue;
      scale /= n;
    }
    for (size_t j = 0; j < E.dim; ++j) qvec[j] += scale * vec[j];
  }

  std::map<std::string, double> weights;
  for (const auto& [term, row] : candidates) {
    auto vec = E.input_row(row);
    double w = dot(vec, qvec);
    if (mode == SimilarityMode::cosine) {
      double n = norm(vec);
      w = n == 0.0 ? 0.0 : w / n;
    }
    weights[term] = w;
  }
  return weights;
}

ExpansionModel expansion_lm(const std::map<std::string, double>& weights, size_t k,
                            EmbeddingOrigin origin) {
  if (k == 0) throw std::invalid_argument("expansion size must be positive");
  if (weights.empty()) throw DataError("no expansion candidates");

  std::vector<std::pair<std::string, double>> ranked(weights.begin(), weights.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);

  std::map<std::string, double> selected;
  for (const auto& [term, w] : ranked)
    if (w > 0.0) selected[term] = w;
  if (selected.empty()) throw DataError("expansion selected no positive-weight terms");

  ExpansionModel model;
  model.lm = LanguageModel::from_weights(selected);
  model.k_used = k;
  model.origin = origin;
  return model;
}

LanguageModel interpolate(const LanguageModel& p_q, const LanguageModel& p_q_plus,
                          double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("interpolation weight outside [0, 1]");

  std::map<std::string, double> mixed;
  for (const auto& [term, p] : p_q) mixed[term] += lambda * p;
  for (const auto& [term, p] : p_q_plus) mixed[term] += (1.0 - lambda) * p;
  for (auto it = mixed.begin(); it != mixed.end();)
    it = it->second == 0.0 ? mixed.erase(it) : std::next(it);
  return LanguageModel::from_probs(mixed);
}

RankedList rescore(const RankedList& initial, const LanguageModel& expanded_lm,
                   const Index& index, double mu) {
  if (initial.docs.empty()) throw std::invalid_argument("empty initial retrieval");

  RankedList out;
  out.query_id = initial.query_id;
  out.docs.reserve(initial.docs.size());
  for (const auto& sd : initial.docs) {
    auto doc = index.doc_index(sd.doc_id);
    if (!doc) throw DataError("retrieved document not in index: " + sd.doc_id);
    out.docs.push_back({sd.doc_id, ql_score(expanded_lm, *doc, index, mu)});
  }
  std::sort(out.docs.begin(), out.docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return out;
}

}  // namespace lwe
