#include "lwe/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lwe/util.hpp"

namespace lwe {

Query make_query(const std::string& id, const std::string& text, const Analyzer& analyzer) {
  Query q;
  q.id = id;
  q.terms = analyzer.tokenize(text);
  if (q.terms.empty()) return q;
  std::map<std::string, double> counts;
  for (const auto& t : q.terms) counts[t] += 1.0;
  q.lm = LanguageModel::from_weights(counts);
  return q;
}

namespace {

struct ResolvedTerm {
  uint32_t term;
  double q_prob;
  double mu_pc;  // mu * collection probability, the smoothing mass
};

// Query-side preparation shared by ql_score and retrieve: resolve terms
// against the vocabulary and drop the ones the collection has never seen.
std::vector<ResolvedTerm> resolve_query_terms(const LanguageModel& query_lm, const Index& index,
                                              double mu) {
  std::vector<ResolvedTerm> out;
  double collection_size = static_cast<double>(index.total_tokens());
  for (const auto& [term, qp] : query_lm) {
    auto t = index.term_id(term);
    if (!t) continue;  // no collection statistics, cannot smooth
    double pc = static_cast<double>(index.collection_tf(*t)) / collection_size;
    out.push_back({*t, qp, mu * pc});
  }
  return out;
}

double score_resolved(const std::vector<ResolvedTerm>& terms, uint32_t doc, const Index& index,
                      double mu) {
  double len = static_cast<double>(index.doc_length(doc));
  double score = 0.0;
  for (const ResolvedTerm& rt : terms) {
    double tf = static_cast<double>(index.term_frequency(rt.term, doc));
    double smoothed = (tf + rt.mu_pc) / (len + mu);
    score -= rt.q_prob * std::log(rt.q_prob / smoothed);
  }
  return score;
}

}  // namespace

double ql_score(const LanguageModel& query_lm, uint32_t doc, const Index& index, double mu) {
  if (query_lm.empty()) throw std::invalid_argument("empty query model");
  if (doc >= index.doc_count()) throw std::invalid_argument("document index out of range");
  if (index.total_tokens() == 0) throw DataError("index holds no tokens");
  auto terms = resolve_query_terms(query_lm, index, mu);
  if (terms.empty())
    throw DataError("no query term occurs in the collection; score undefined");
  return score_resolved(terms, doc, index, mu);
}

double ql_score(const Query& query, uint32_t doc, const Index& index, double mu) {
  return ql_score(query.lm, doc, index, mu);
}

RankedList retrieve(const Query& query, const Index& index, size_t depth, double mu) {
  if (query.terms.empty()) throw std::invalid_argument("query '" + query.id + "' has no terms");
  RankedList out;
  out.query_id = query.id;

  auto terms = resolve_query_terms(query.lm, index, mu);
  if (terms.empty()) return out;  // nothing matchable, empty result

  // Candidates are the union of the query terms' postings.
  std::vector<uint32_t> candidates;
  for (const ResolvedTerm& rt : terms)
    for (const Index::Posting& p : index.postings(rt.term)) candidates.push_back(p.doc);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<std::pair<double, uint32_t>> scored;
  scored.reserve(candidates.size());
  for (uint32_t d : candidates) scored.emplace_back(score_resolved(terms, d, index, mu), d);

  // Full sort rather than a heap: candidate sets here are small and the
  // externally visible tie rule (score, then doc id ascending) stays obvious.
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return index.doc_id(a.second) < index.doc_id(b.second);
  });
  if (scored.size() > depth) scored.resize(depth);

  out.docs.reserve(scored.size());
  for (const auto& [score, d] : scored) out.docs.push_back({index.doc_id(d), score});
  return out;
}

double DocPosterior::prob(const std::string& doc_id) const {
  for (const auto& [id, p] : docs)
    if (id == doc_id) return p;
  return 0.0;
}

DocPosterior doc_posterior(const RankedList& ranked, double temperature) {
  if (ranked.docs.empty()) throw std::invalid_argument("empty ranked list has no posterior");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");

  double max_score = ranked.docs.front().score;
  for (const ScoredDoc& sd : ranked.docs) max_score = std::max(max_score, sd.score);

  DocPosterior post;
  post.docs.reserve(ranked.docs.size());
  double z = 0.0;
  for (const ScoredDoc& sd : ranked.docs) {
    double w = std::exp((sd.score - max_score) / temperature);
    post.docs.emplace_back(sd.doc_id, w);
    z += w;
  }
  for (auto& [id, p] : post.docs) p /= z;
  return post;
}

std::vector<std::string> sample_docs(const DocPosterior& posterior, size_t count, uint64_t seed) {
  if (posterior.docs.empty()) throw std::invalid_argument("empty posterior");
  std::vector<double> cdf;
  cdf.reserve(posterior.docs.size());
  double acc = 0.0;
  for (const auto& [id, p] : posterior.docs) {
    acc += p;
    cdf.push_back(acc);
  }
  double total = cdf.back();

  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    double u = rng.next_double() * total;
    size_t pos = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    if (pos == cdf.size()) pos = cdf.size() - 1;  // u == total edge
    out.push_back(posterior.docs[pos].first);
  }
  return out;
}

}  // namespace lwe
