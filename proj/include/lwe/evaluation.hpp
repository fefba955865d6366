#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lwe/retrieval.hpp"

namespace lwe {

// Relevance judgments. Anything not judged has grade 0; negative grades are
// rejected on input.
class Qrels {
 public:
  static Qrels from_file(const std::string& path);

  void add(const std::string& query_id, const std::string& doc_id, int grade);
  int grade(const std::string& query_id, const std::string& doc_id) const;
  bool any_relevant(const std::string& query_id) const;
  const std::map<std::string, std::map<std::string, int>>& judgments() const {
    return judgments_;
  }

 private:
  std::map<std::string, std::map<std::string, int>> judgments_;
};

// Gain 2^grade - 1, discount log2(rank + 1), normalized by the ideal gain
// over all judged documents (retrieved or not). Queries without a single
// positive grade have no defined value and are an error here; callers skip
// and report them.
double ndcg_at_10(const RankedList& ranked, const Qrels& qrels);

// Interpolated precision at recall 0.0, 0.1, ..., 1.0: the maximum precision
// over every rank whose achieved recall meets the level. Grades are
// binarized as grade > 0.
std::array<double, 11> interpolated_pr(const RankedList& ranked, const Qrels& qrels);

struct EvalReport {
  std::map<std::string, double> ndcg;     // per evaluable query
  std::vector<std::string> skipped;       // queries with no positive judgment
  double mean_ndcg = 0.0;                 // arithmetic mean over evaluable queries
  std::array<double, 11> pr_curve{};      // pointwise mean of per-query curves
  std::map<std::string, double> significance;  // test name -> p, filled by callers
};

EvalReport evaluate_run(const std::vector<RankedList>& run, const Qrels& qrels);

struct CVGrid {
  std::vector<size_t> k_values = {5, 10, 25, 50, 100, 250, 500};
  std::vector<double> lambda_values = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> alpha_values = {0.1, 0.01, 0.001};
  size_t folds = 10;
};

struct CVParams {
  size_t k = 50;
  double lambda = 0.5;
  double alpha = 0.05;
  bool operator==(const CVParams&) const = default;
};

// Produces the ranked list for one query under one parameter setting.
using SystemFn = std::function<RankedList(const std::string& query_id, const CVParams&)>;

struct CVOutcome {
  std::vector<std::vector<std::string>> folds;   // query ids per fold
  std::vector<CVParams> fold_params;             // winner chosen per fold
  std::map<std::string, double> ndcg;            // held-out score per query
  std::map<std::string, CVParams> params;        // parameters applied per query
  std::vector<std::string> skipped;              // unevaluable queries, never folded
  double mean_ndcg = 0.0;
};

// Shuffles the evaluable queries by seed, deals them round-robin into folds,
// and for each fold applies the grid point with the best mean NDCG@10 over
// the other folds' queries. Ties prefer the smallest k, then the largest
// lambda, then the largest alpha.
CVOutcome cross_validate(const SystemFn& system, const std::vector<std::string>& query_ids,
                         const Qrels& qrels, const CVGrid& grid, uint64_t seed);

// Two-sided signed-rank test. Zero differences are dropped; if none remain
// the samples are indistinguishable and p = 1. Requires at least 6 surviving
// pairs. Exact enumeration up to n = 25, tie-corrected normal approximation
// with continuity correction beyond.
double wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

struct RankCorrelation {
  double tau;  // Kendall tau-b, tie corrected
  double rho;  // Spearman: Pearson over average ranks
};

RankCorrelation rank_correlations(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lwe
