#include "lwe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lwe/util.hpp"

namespace lwe {

Qrels Qrels::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open qrels file: " + path);
  Qrels qrels;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string qid, iteration, docid, grade_text;
    if (!(fields >> qid >> iteration >> docid >> grade_text)) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected qid 0 docid grade");
    }
    std::string extra;
    if (fields >> extra) {
      throw DataError(path + ":" + std::to_string(line_no) + ": trailing fields");
    }
    int grade = 0;
    try {
      size_t used = 0;
      grade = std::stoi(grade_text, &used);
      if (used != grade_text.size()) throw std::invalid_argument(grade_text);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad grade '" + grade_text +
                      "'");
    }
    qrels.add(qid, docid, grade);
  }
  return qrels;
}

void Qrels::add(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < 0) throw DataError("negative grade for " + query_id + "/" + doc_id);
  auto [it, inserted] = judgments_[query_id].emplace(doc_id, grade);
  if (!inserted) throw DataError("duplicate judgment for " + query_id + "/" + doc_id);
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
  auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return 0;
  auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

bool Qrels::any_relevant(const std::string& query_id) const {
  auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return false;
  for (const auto& [doc, g] : q->second)
    if (g > 0) return true;
  return false;
}

namespace {

double gain(int grade) { return std::exp2(double(grade)) - 1.0; }

std::vector<int> positive_grades(const Qrels& qrels, const std::string& query_id) {
  std::vector<int> grades;
  auto it = qrels.judgments().find(query_id);
  if (it != qrels.judgments().end())
    for (const auto& [doc, g] : it->second)
      if (g > 0) grades.push_back(g);
  if (grades.empty())
    throw DataError("no relevant documents judged for query: " + query_id);
  return grades;
}

}  // namespace

double ndcg_at_10(const RankedList& ranked, const Qrels& qrels) {
  auto grades = positive_grades(qrels, ranked.query_id);
  std::sort(grades.begin(), grades.end(), std::greater<>());

  double ideal = 0.0;
  for (size_t i = 0; i < std::min<size_t>(10, grades.size()); ++i)
    ideal += gain(grades[i]) / std::log2(double(i) + 2.0);

  double dcg = 0.0;
  for (size_t i = 0; i < std::min<size_t>(10, ranked.docs.size()); ++i)
    dcg += gain(qrels.grade(ranked.query_id, ranked.docs[i].doc_id)) /
           std::log2(double(i) + 2.0);
  return dcg / ideal;
}

std::array<double, 11> interpolated_pr(const RankedList& ranked, const Qrels& qrels) {
  size_t total_relevant = positive_grades(qrels, ranked.query_id).size();

  // precision at each rank that retrieves a relevant document, with the
  // recall numerator kept integral so level comparisons are exact
  std::vector<std::pair<size_t, double>> points;  // (hits, precision)
  size_t hits = 0;
  for (size_t i = 0; i < ranked.docs.size(); ++i) {
    if (qrels.grade(ranked.query_id, ranked.docs[i].doc_id) > 0) {
      ++hits;
      points.emplace_back(hits, double(hits) / double(i + 1));
    }
  }

  std::array<double, 11> curve{};
  for (size_t level = 0; level <= 10; ++level) {
    double best = 0.0;
    for (const auto& [h, prec] : points)
      if (10 * h >= level * total_relevant) best = std::max(best, prec);
    curve[level] = best;
  }
  return curve;
}

EvalReport evaluate_run(const std::vector<RankedList>& run, const Qrels& qrels) {
  EvalReport report;
  size_t evaluable = 0;
  for (const auto& ranked : run) {
    if (!qrels.any_relevant(ranked.query_id)) {
      report.skipped.push_back(ranked.query_id);
      continue;
    }
    if (report.ndcg.count(ranked.query_id))
      throw DataError("duplicate query in run: " + ranked.query_id);
    report.ndcg[ranked.query_id] = ndcg_at_10(ranked, qrels);
    auto curve = interpolated_pr(ranked, qrels);
    for (size_t i = 0; i < curve.size(); ++i) report.pr_curve[i] += curve[i];
    ++evaluable;
  }
  if (evaluable > 0) {
    double sum = 0.0;
    for (const auto& [q, v] : report.ndcg) sum += v;
    report.mean_ndcg = sum / double(evaluable);
    for (auto& p : report.pr_curve) p /= double(evaluable);
  }
  return report;
}

CVOutcome cross_validate(const SystemFn& system, const std::vector<std::string>& query_ids,
                         const Qrels& qrels, const CVGrid& grid, uint64_t seed) {
  if (grid.k_values.empty() || grid.lambda_values.empty() || grid.alpha_values.empty())
    throw std::invalid_argument("empty parameter grid");
  if (grid.folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");

  CVOutcome outcome;
  std::vector<std::string> evaluable;
  for (const auto& q : query_ids) {
    if (qrels.any_relevant(q))
      evaluable.push_back(q);
    else
      outcome.skipped.push_back(q);
  }
  {
    auto sorted = evaluable;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw DataError("duplicate query id");
  }
  if (evaluable.size() < grid.folds)
    throw DataError("fewer evaluable queries than folds");

  // shuffle by seed, deal round-robin
  Rng rng(seed);
  std::vector<std::string> order = evaluable;
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);
  outcome.folds.assign(grid.folds, {});
  std::map<std::string, size_t> fold_of;
  for (size_t i = 0; i < order.size(); ++i) {
    outcome.folds[i % grid.folds].push_back(order[i]);
    fold_of[order[i]] = i % grid.folds;
  }

  // grid points in tie-break priority order: k up, lambda down, alpha down
  auto k_values = grid.k_values;
  auto lambda_values = grid.lambda_values;
  auto alpha_values = grid.alpha_values;
  std::sort(k_values.begin(), k_values.end());
  std::sort(lambda_values.begin(), lambda_values.end(), std::greater<>());
  std::sort(alpha_values.begin(), alpha_values.end(), std::greater<>());
  std::vector<CVParams> points;
  for (size_t k : k_values)
    for (double lambda : lambda_values)
      for (double alpha : alpha_values) points.push_back({k, lambda, alpha});

  // full score matrix: system is called once per (point, query)
  std::vector<std::map<std::string, double>> scores(points.size());
  for (size_t p = 0; p < points.size(); ++p)
    for (const auto& q : evaluable)
      scores[p][q] = ndcg_at_10(system(q, points[p]), qrels);

  outcome.fold_params.resize(grid.folds);
  for (size_t f = 0; f < grid.folds; ++f) {
    size_t best_point = 0;
    double best_mean = -1.0;
    for (size_t p = 0; p < points.size(); ++p) {
      double sum = 0.0;
      size_t count = 0;
      for (const auto& q : evaluable) {
        if (fold_of[q] == f) continue;
        sum += scores[p][q];
        ++count;
      }
      double mean = count ? sum / double(count) : 0.0;
      if (mean > best_mean) {
        best_mean = mean;
        best_point = p;
      }
    }
    outcome.fold_params[f] = points[best_point];
    for (const auto& q : outcome.folds[f]) {
      outcome.ndcg[q] = scores[best_point][q];
      outcome.params[q] = points[best_point];
    }
  }

  double sum = 0.0;
  for (const auto& [q, v] : outcome.ndcg) sum += v;
  outcome.mean_ndcg = outcome.ndcg.empty() ? 0.0 : sum / double(outcome.ndcg.size());
  return outcome;
}

double wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("signed-rank test needs paired samples");

  std::vector<double> diffs;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  size_t n = diffs.size();
  if (n == 0) return 1.0;  // identical samples
  if (n < 6) throw std::invalid_argument("too few nonzero differences for a signed-rank test");

  // ranks over |d| ascending; doubled average ranks stay integral under ties
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) {
    return std::abs(diffs[i]) < std::abs(diffs[j]);
  });
  std::vector<uint64_t> doubled_rank(n);
  std::vector<size_t> tie_sizes;
  for (size_t start = 0; start < n;) {
    size_t end = start;
    while (end < n && std::abs(diffs[idx[end]]) == std::abs(diffs[idx[start]])) ++end;
    uint64_t doubled = (start + 1) + end;  // first rank + last rank
    for (size_t i = start; i < end; ++i) doubled_rank[idx[i]] = doubled;
    tie_sizes.push_back(end - start);
    start = end;
  }

  uint64_t w_plus2 = 0;
  for (size_t i = 0; i < n; ++i)
    if (diffs[i] > 0) w_plus2 += doubled_rank[i];
  const uint64_t total2 = uint64_t(n) * (n + 1);  // both signs together
  const uint64_t lo = std::min(w_plus2, total2 - w_plus2);
  const uint64_t hi = std::max(w_plus2, total2 - w_plus2);

  if (n <= 25) {
    // distribution of the doubled statistic over all sign assignments
    std::vector<uint64_t> count(total2 + 1, 0);
    count[0] = 1;
    for (size_t i = 0; i < n; ++i) {
      uint64_t r = doubled_rank[i];
      for (size_t s = total2 - r + 1; s-- > 0;) count[s + r] += count[s];
    }
    uint64_t extreme = 0;
    for (uint64_t s = 0; s <= lo; ++s) extreme += count[s];
    for (uint64_t s = hi; s <= total2; ++s) extreme += count[s];
    double p = double(extreme) / std::exp2(double(n));
    return std::min(p, 1.0);
  }

  double mean = double(total2) / 4.0;
  double var = double(n) * (n + 1) * (2.0 * n + 1) / 24.0;
  for (size_t t : tie_sizes) var -= (double(t) * t * t - t) / 48.0;
  double w = double(w_plus2) / 2.0;
  double delta = std::abs(w - mean);
  double z = delta <= 0.5 ? 0.0 : (delta - 0.5) / std::sqrt(var);
  return std::min(std::erfc(z / std::sqrt(2.0)), 1.0);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  size_t n = values.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (size_t start = 0; start < n;) {
    size_t end = start;
    while (end < n && values[idx[end]] == values[idx[start]]) ++end;
    double rank = (double(start + 1) + double(end)) / 2.0;
    for (size_t i = start; i < end; ++i) ranks[idx[i]] = rank;
    start = end;
  }
  return ranks;
}

uint64_t tied_pairs(const std::vector<double>& values) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  uint64_t pairs = 0;
  for (size_t start = 0; start < sorted.size();) {
    size_t end = start;
    while (end < sorted.size() && sorted[end] == sorted[start]) ++end;
    uint64_t t = end - start;
    pairs += t * (t - 1) / 2;
    start = end;
  }
  return pairs;
}

// merge sort counting strict inversions (earlier element greater)
uint64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, size_t lo,
                          size_t hi) {
  if (hi - lo < 2) return 0;
  size_t mid = lo + (hi - lo) / 2;
  uint64_t swaps = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
  size_t i = lo, j = mid, out = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      scratch[out++] = v[j++];
    } else {
      scratch[out++] = v[i++];
    }
  }
  while (i < mid) scratch[out++] = v[i++];
  while (j < hi) scratch[out++] = v[j++];
  std::copy(scratch.begin() + lo, scratch.begin() + hi, v.begin() + lo);
  return swaps;
}

}  // namespace

RankCorrelation rank_correlations(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  if (n != y.size()) throw std::invalid_argument("rank correlation needs paired samples");
  if (n < 2) throw std::invalid_argument("rank correlation needs at least 2 pairs");

  const uint64_t n0 = uint64_t(n) * (n - 1) / 2;
  const uint64_t n1 = tied_pairs(x);
  const uint64_t n2 = tied_pairs(y);
  if (n0 == n1 || n0 == n2) throw DataError("correlation undefined: zero variance");

  // joint ties
  std::vector<std::pair<double, double>> pairs(n);
  for (size_t i = 0; i < n; ++i) pairs[i] = {x[i], y[i]};
  std::sort(pairs.begin(), pairs.end());
  uint64_t n3 = 0;
  for (size_t start = 0; start < n;) {
    size_t end = start;
    while (end < n && pairs[end] == pairs[start]) ++end;
    uint64_t t = end - start;
    n3 += t * (t - 1) / 2;
    start = end;
  }

  // y sequence ordered by (x, y); inversions are the discordant pairs
  std::vector<double> y_seq(n);
  for (size_t i = 0; i < n; ++i) y_seq[i] = pairs[i].second;
  std::vector<double> scratch(n);
  uint64_t swaps = count_inversions(y_seq, scratch, 0, n);

  double concordant_minus_discordant =
      double(n0) - double(n1) - double(n2) + double(n3) - 2.0 * double(swaps);
  double tau = concordant_minus_discordant /
               std::sqrt(double(n0 - n1) * double(n0 - n2));

  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  double mean = (double(n) + 1.0) / 2.0;
  double cov = 0.0, var_x = 0.0, var_y = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dx = rx[i] - mean, dy = ry[i] - mean;
    cov += dx * dy;
    var_x += dx * dx;
    var_y += dy * dy;
  }
  double rho = cov / std::sqrt(var_x * var_y);
  return {tau, rho};
}

}  // namespace lwe
