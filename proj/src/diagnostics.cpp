#include "lwe/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "lwe/util.hpp"

namespace lwe {

TopicModel local_unigram(const DocPosterior& posterior, const Index& index) {
  if (posterior.docs.empty()) throw std::invalid_argument("empty posterior");

  std::map<std::string, double> mixture;
  size_t skipped = 0;
  for (const auto& [doc_id, p] : posterior.docs) {
    auto doc = index.doc_index(doc_id);
    if (!doc) throw DataError("posterior document not in index: " + doc_id);
    if (index.doc_length(*doc) == 0) {
      std::cerr << "warning: zero-length document " << doc_id
                << " contributes nothing to the topic model\n";
      ++skipped;
      continue;
    }
    for (const auto& [term, prob] : doc_lm(index, *doc)) mixture[term] += p * prob;
  }
  if (mixture.empty()) throw DataError("no posterior document has any terms");

  TopicModel topic;
  // from_weights renormalizes, which folds away the mass of skipped docs
  topic.lm = LanguageModel::from_weights(mixture);
  topic.source = std::to_string(posterior.docs.size() - skipped) + " documents";
  return topic;
}

DocPosterior relevance_posterior(const std::string& query_id, const Qrels& qrels,
                                 const Index& index) {
  std::vector<std::string> docs;
  auto it = qrels.judgments().find(query_id);
  if (it != qrels.judgments().end())
    for (const auto& [doc_id, grade] : it->second)
      if (grade > 0 && index.doc_index(doc_id)) docs.push_back(doc_id);
  if (docs.empty())
    throw DataError("no judged-relevant documents in the index for query: " + query_id);

  DocPosterior posterior;
  for (const auto& d : docs) posterior.docs.emplace_back(d, 1.0 / double(docs.size()));
  return posterior;
}

ImportanceWeights importance_weights(const TopicModel& p_t, const LanguageModel& p_c) {
  ImportanceWeights result;
  for (const auto& [term, p] : p_t.lm) {
    if (p_c.contains(term))
      result.omega[term] = p / p_c.prob(term);
    else
      result.out_of_corpus.push_back(term);
  }
  return result;
}

PointwiseKl pointwise_kl(const TopicModel& p_t, const LanguageModel& p_c) {
  PointwiseKl result;
  for (const auto& [term, p] : p_t.lm) {
    if (p_c.contains(term))
      result.terms.push_back({term, p * std::log(p / p_c.prob(term))});
    else
      result.excluded.push_back(term);
  }
  std::sort(result.terms.begin(), result.terms.end(),
            [](const TermDivergence& a, const TermDivergence& b) {
              if (a.value != b.value) return a.value > b.value;
              return a.term < b.term;
            });
  return result;
}

double clarity(const TopicModel& p_t, const LanguageModel& p_c) {
  double kl = 0.0;
  for (const auto& [term, p] : p_t.lm) {
    if (!p_c.contains(term))
      throw DataError("topic term outside the corpus model: " + term);
    kl += p * std::log(p / p_c.prob(term));
  }
  return kl;
}

NeighborComparison compare_neighbors(const EmbeddingMatrix& global_model,
                                     const EmbeddingMatrix& local_model,
                                     const std::string& term, size_t k) {
  NeighborComparison cmp;
  if (global_model.row_of(term)) cmp.global_side = neighbors(global_model, term, k);
  if (local_model.row_of(term)) cmp.local_side = neighbors(local_model, term, k);
  return cmp;
}

}  // namespace lwe
