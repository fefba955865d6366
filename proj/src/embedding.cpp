#include "lwe/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "lwe/retrieval.hpp"
#include "lwe/util.hpp"

namespace lwe {

namespace {

inline double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow on either tail.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::optional<uint32_t> EmbeddingMatrix::row_of(const std::string& term) const {
  auto it = lookup_.find(term);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingMatrix::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(vocab.size());
  for (uint32_t r = 0; r < vocab.size(); ++r) {
    auto [it, inserted] = lookup_.emplace(vocab[r], r);
    if (!inserted) throw DataError("duplicate vocabulary term '" + vocab[r] + "'");
  }
}

// ---------------------------------------------------------------------------
// Instance objective

double instance_loss(std::span<const double> target_vec, std::span<const double> context_vec,
                     const std::vector<std::vector<double>>& negative_vecs) {
  double loss = log_sigmoid(dot(target_vec, context_vec));
  for (const auto& neg : negative_vecs)
    loss += log_sigmoid(-dot(target_vec, {neg.data(), neg.size()}));
  return loss;
}

namespace {

std::vector<double> context_mean(const TrainingInstance& inst, const EmbeddingMatrix& m) {
  if (inst.context.empty()) throw std::invalid_argument("instance has no context");
  std::vector<double> c(m.dim, 0.0);
  for (uint32_t row : inst.context) {
    auto v = m.output_row(row);
    for (size_t i = 0; i < m.dim; ++i) c[i] += v[i];
  }
  double inv = 1.0 / static_cast<double>(inst.context.size());
  for (double& x : c) x *= inv;
  return c;
}

}  // namespace

double instance_loss(const TrainingInstance& inst, const EmbeddingMatrix& m,
                     const std::vector<uint32_t>& negatives) {
  auto c = context_mean(inst, m);
  auto w = m.input_row(inst.target);
  double loss = log_sigmoid(dot(w, {c.data(), c.size()}));
  for (uint32_t n : negatives) loss += log_sigmoid(-dot(w, m.output_row(n)));
  return loss;
}

InstanceGradient instance_gradient(const TrainingInstance& inst, const EmbeddingMatrix& m,
                                   const std::vector<uint32_t>& negatives) {
  auto c = context_mean(inst, m);
  auto w = m.input_row(inst.target);
  size_t k = m.dim;

  // d/dw log sig(w.c) = (1 - sig(w.c)) c         d/dc ... = (1 - sig(w.c)) w
  // d/dw log sig(-w.n) = -sig(w.n) n             d/dn ... = -sig(w.n) w
  double g_pos = 1.0 - sigmoid(dot(w, {c.data(), c.size()}));

  std::vector<double> grad_w(k, 0.0);
  for (size_t i = 0; i < k; ++i) grad_w[i] = g_pos * c[i];

  std::map<uint32_t, std::vector<double>> out_grads;  // ordered, reproducible
  double ctx_share = g_pos / static_cast<double>(inst.context.size());
  for (uint32_t row : inst.context) {
    auto& g = out_grads.try_emplace(row, k, 0.0).first->second;
    for (size_t i = 0; i < k; ++i) g[i] += ctx_share * w[i];
  }
  for (uint32_t n : negatives) {
    auto nv = m.output_row(n);
    double g_neg = -sigmoid(dot(w, nv));
    for (size_t i = 0; i < k; ++i) grad_w[i] += g_neg * nv[i];
    auto& g = out_grads.try_emplace(n, k, 0.0).first->second;
    for (size_t i = 0; i < k; ++i) g[i] += g_neg * w[i];
  }

  InstanceGradient result;
  result.input.push_back({inst.target, std::move(grad_w)});
  for (auto& [row, g] : out_grads) result.output.push_back({row, std::move(g)});
  return result;
}

// ---------------------------------------------------------------------------
// Noise table

NoiseTable::NoiseTable(const std::vector<uint64_t>& counts) {
  if (counts.empty()) throw std::invalid_argument("empty noise distribution");
  probs_.reserve(counts.size());
  cdf_.reserve(counts.size());
  double acc = 0.0;
  for (uint64_t c : counts) {
    double w = std::pow(static_cast<double>(c), 0.75);
    acc += w;
    cdf_.push_back(acc);
    probs_.push_back(w);
  }
  if (acc <= 0.0) throw std::invalid_argument("noise distribution has no mass");
  for (double& p : probs_) p /= acc;
}

uint32_t NoiseTable::draw(Rng& rng) const {
  double u = rng.next_double() * cdf_.back();
  size_t pos = std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
  if (pos == cdf_.size()) pos = cdf_.size() - 1;
  return static_cast<uint32_t>(pos);
}

// ---------------------------------------------------------------------------
// Samplers

DocSampler all_docs_sampler(const Index& index) {
  std::vector<std::string> ids;
  ids.reserve(index.doc_count());
  for (uint32_t d = 0; d < index.doc_count(); ++d) ids.push_back(index.doc_id(d));
  return [ids](uint64_t) { return ids; };
}

DocSampler posterior_sampler(const DocPosterior& posterior, size_t count) {
  DocPosterior copy = posterior;
  return [copy, count](uint64_t seed) { return sample_docs(copy, count, seed); };
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

struct TrainSetup {
  std::vector<uint32_t> docs;             // internal document indices, sample order
  std::vector<uint32_t> term_of_row;      // row -> index term id
  std::vector<int64_t> row_of_term;       // index term id -> row or -1
  std::vector<uint64_t> row_count;        // occurrences within the sample
  std::vector<double> keep_prob;          // subsampling survival per row
  std::optional<NoiseTable> noise;
  uint64_t retained_tokens = 0;           // per pass, before subsampling
};

TrainSetup prepare(const std::vector<std::string>& doc_ids, const Index& index,
                   const TrainConfig& cfg) {
  if (doc_ids.empty()) throw DataError("empty document sample");

  TrainSetup s;
  s.docs.reserve(doc_ids.size());
  std::vector<uint64_t> counts(index.vocabulary().size(), 0);
  uint64_t total = 0;
  for (const auto& id : doc_ids) {
    auto d = index.doc_index(id);
    if (!d) throw DataError("sampled document '" + id + "' is not in the index");
    s.docs.push_back(*d);
    for (uint32_t t : index.doc_tokens(*d)) {
      ++counts[t];
      ++total;
    }
  }

  s.row_of_term.assign(index.vocabulary().size(), -1);
  for (uint32_t t = 0; t < counts.size(); ++t) {
    if (counts[t] >= cfg.min_count && counts[t] > 0) {
      s.row_of_term[t] = static_cast<int64_t>(s.term_of_row.size());
      s.term_of_row.push_back(t);
      s.row_count.push_back(counts[t]);
      s.retained_tokens += counts[t];
    }
  }
  if (s.term_of_row.empty()) throw DataError("sample has no trainable vocabulary");

  // Survival probability of the frequent-word filter.
  s.keep_prob.resize(s.row_count.size());
  for (size_t r = 0; r < s.row_count.size(); ++r) {
    if (cfg.subsample <= 0.0) {
      s.keep_prob[r] = 1.0;
      continue;
    }
    double f = static_cast<double>(s.row_count[r]) / static_cast<double>(s.retained_tokens);
    double keep = (std::sqrt(f / cfg.subsample) + 1.0) * cfg.subsample / f;
    s.keep_prob[r] = std::min(1.0, keep);
  }

  s.noise.emplace(s.row_count);
  return s;
}

// One pass over a span of documents.  The matrices are updated in place; the
// gradient for an instance is evaluated entirely at the pre-update point and
// then applied, so a single-threaded pass is a sequence of exact
// instance_gradient steps.
struct PassStats {
  double loss_sum = 0.0;
  uint64_t instances = 0;
};

PassStats run_pass(EmbeddingMatrix& m, const Index& index, const TrainSetup& s,
                   const TrainConfig& cfg, const std::vector<uint32_t>& docs, Rng& rng,
                   uint64_t& tokens_done, uint64_t tokens_total) {
  PassStats stats;
  size_t k = m.dim;
  std::vector<uint32_t> sequence;
  std::vector<double> cvec(k), grad_w(k);
  std::vector<uint32_t> negs(cfg.negatives);
  std::vector<double> neg_coef(cfg.negatives);
  double lr_floor = cfg.learning_rate * 1e-4;

  for (uint32_t d : docs) {
    // Subsample the document into the working sequence.
    sequence.clear();
    for (uint32_t t : index.doc_tokens(d)) {
      int64_t row = s.row_of_term[t];
      if (row < 0) continue;
      ++tokens_done;
      if (cfg.subsample > 0.0) {
        double u = rng.next_double();
        if (u >= s.keep_prob[row]) continue;
      }
      sequence.push_back(static_cast<uint32_t>(row));
    }

    for (size_t pos = 0; pos < sequence.size(); ++pos) {
      double progress = static_cast<double>(tokens_done) / static_cast<double>(tokens_total);
      double lr = std::max(lr_floor, cfg.learning_rate * (1.0 - progress));

      size_t radius = cfg.window - rng.next_below(cfg.window);
      size_t lo = pos > radius ? pos - radius : 0;
      size_t hi = std::min(sequence.size() - 1, pos + radius);
      uint32_t target = sequence[pos];

      std::fill(cvec.begin(), cvec.end(), 0.0);
      size_t ctx_n = 0;
      for (size_t j = lo; j <= hi; ++j) {
        if (j == pos) continue;
        auto v = m.output_row(sequence[j]);
        for (size_t i = 0; i < k; ++i) cvec[i] += v[i];
        ++ctx_n;
      }
      if (ctx_n == 0) continue;
      double inv = 1.0 / static_cast<double>(ctx_n);
      for (double& x : cvec) x *= inv;

      auto w = m.input_row(target);
      double f = sigmoid(dot(w, {cvec.data(), k}));
      double g_pos = 1.0 - f;
      stats.loss_sum -= log_sigmoid(dot(w, {cvec.data(), k}));
      for (size_t i = 0; i < k; ++i) grad_w[i] = g_pos * cvec[i];

      size_t n_drawn = 0;
      for (size_t n = 0; n < cfg.negatives; ++n) {
        uint32_t cand = s.noise->draw(rng);
        if (cand == target) continue;  // draw consumed, update skipped
        auto nv = m.output_row(cand);
        double dn = dot(w, nv);
        double g_neg = -sigmoid(dn);
        stats.loss_sum -= log_sigmoid(-dn);
        for (size_t i = 0; i < k; ++i) grad_w[i] += g_neg * nv[i];
        negs[n_drawn] = cand;
        neg_coef[n_drawn] = g_neg;
        ++n_drawn;
      }
      ++stats.instances;

      // Apply at the old point: context and negative rows move along the
      // still-unchanged target row, which is updated last.
      double ctx_step = lr * g_pos * inv;
      for (size_t j = lo; j <= hi; ++j) {
        if (j == pos) continue;
        auto v = m.output_row(sequence[j]);
        for (size_t i = 0; i < k; ++i) v[i] += ctx_step * w[i];
      }
      for (size_t n = 0; n < n_drawn; ++n) {
        auto nv = m.output_row(negs[n]);
        double step = lr * neg_coef[n];
        for (size_t i = 0; i < k; ++i) nv[i] += step * w[i];
      }
      for (size_t i = 0; i < k; ++i) w[i] += lr * grad_w[i];
    }
  }
  return stats;
}

}  // namespace

TrainResult train(const std::vector<std::string>& doc_ids, const Index& index,
                  const TrainConfig& cfg) {
  DocSampler fixed = [doc_ids](uint64_t) { return doc_ids; };
  TrainConfig one_shot = cfg;
  one_shot.resample_each_pass = false;
  return train(fixed, index, one_shot);
}

TrainResult train(const DocSampler& sampler, const Index& index, const TrainConfig& cfg) {
  if (cfg.dim == 0) throw std::invalid_argument("dim must be positive");
  if (cfg.window == 0) throw std::invalid_argument("window must be positive");
  if (cfg.iterations == 0) throw std::invalid_argument("iterations must be positive");
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("negative learning rate");

  auto sample_seed = [&](size_t pass) { return mix64(cfg.seed ^ (0xA5A5A5A5ULL + pass)); };

  std::vector<std::string> doc_ids = sampler(sample_seed(0));
  TrainSetup setup = prepare(doc_ids, index, cfg);

  TrainResult result;
  EmbeddingMatrix& m = result.embedding;
  m.dim = cfg.dim;
  m.vocab.reserve(setup.term_of_row.size());
  for (uint32_t t : setup.term_of_row) m.vocab.push_back(index.term(t));
  m.rebuild_lookup();

  Rng rng(cfg.seed);
  size_t cells = m.vocab.size() * cfg.dim;
  double half = 0.5 / static_cast<double>(cfg.dim);
  m.input_vectors.resize(cells);
  for (double& x : m.input_vectors) x = rng.next_range(-half, half);
  m.output_vectors.assign(cells, 0.0);

  uint64_t tokens_total = setup.retained_tokens * cfg.iterations;
  uint64_t tokens_done = 0;

  for (size_t pass = 0; pass < cfg.iterations; ++pass) {
    if (cfg.resample_each_pass && pass > 0) {
      // The vocabulary, noise distribution and schedule stay pinned to the
      // first draw; later draws only change the document sequence.  Terms a
      // fresh draw brings in that the first draw lacked simply train nothing.
      doc_ids = sampler(sample_seed(pass));
      setup.docs.clear();
      for (const auto& id : doc_ids) {
        auto d = index.doc_index(id);
        if (!d) throw DataError("sampled document '" + id + "' is not in the index");
        setup.docs.push_back(*d);
      }
    }

    PassStats stats;
    if (cfg.threads <= 1) {
      stats = run_pass(m, index, setup, cfg, setup.docs, rng, tokens_done, tokens_total);
    } else {
      // Unsynchronized parallel pass: threads share the matrices and race on
      // row updates.  Loss numbers and vectors are not reproducible here.
      std::vector<std::vector<uint32_t>> shards(cfg.threads);
      for (size_t i = 0; i < setup.docs.size(); ++i)
        shards[i % cfg.threads].push_back(setup.docs[i]);
      std::vector<PassStats> shard_stats(cfg.threads);
      std::vector<std::thread> pool;
      std::atomic<uint64_t> shared_done{tokens_done};
      for (size_t th = 0; th < cfg.threads; ++th) {
        pool.emplace_back([&, th] {
          Rng trng(mix64(cfg.seed ^ (pass * 1315423911ULL + th + 1)));
          uint64_t local_done = shared_done.load();
          shard_stats[th] = run_pass(m, index, setup, cfg, shards[th], trng, local_done,
                                     tokens_total);
        });
      }
      for (auto& t : pool) t.join();
      for (const auto& ss : shard_stats) {
        stats.loss_sum += ss.loss_sum;
        stats.instances += ss.instances;
      }
      tokens_done += setup.retained_tokens;
    }

    if (pass == 0 && stats.instances == 0)
      throw DataError("sample yields no training instances");
    result.pass_loss.push_back(stats.instances ? stats.loss_sum / stats.instances : 0.0);
  }
  return result;
}

// ---------------------------------------------------------------------------
// File formats

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string f;
  while (in >> f) fields.push_back(std::move(f));
  return fields;
}

double parse_value(const std::string& field, const std::string& path) {
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size())
    throw DataError(path + ": bad number '" + field + "'");
  if (!std::isfinite(v)) throw DataError(path + ": non-finite value '" + field + "'");
  return v;
}

}  // namespace

EmbeddingMatrix load_embeddings(const std::string& path, EmbeddingFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);

  EmbeddingMatrix m;
  std::string line;
  std::unordered_map<std::string, uint32_t> seen;
  size_t expected_rows = 0;
  bool have_header = false;
  bool past_comments = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!past_comments && (line.empty() || line[0] == '#')) continue;

    if (format == EmbeddingFormat::w2v_text && !have_header) {
      past_comments = true;
      auto fields = split_ws(line);
      if (fields.size() != 2)
        throw DataError(path + ": expected 'vocab_size dim' header");
      expected_rows = static_cast<size_t>(parse_value(fields[0], path));
      m.dim = static_cast<size_t>(parse_value(fields[1], path));
      if (m.dim == 0) throw DataError(path + ": zero dimension");
      have_header = true;
      continue;
    }
    past_comments = true;

    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw DataError(path + ": row for '" + fields[0] + "' has no values");
    if (m.dim == 0) m.dim = fields.size() - 1;  // glove: first row sets the width
    if (fields.size() != m.dim + 1)
      throw DataError(path + ": row for '" + fields[0] + "' has " +
                      std::to_string(fields.size() - 1) + " values, expected " +
                      std::to_string(m.dim));

    if (!seen.emplace(fields[0], m.vocab.size()).second) {
      std::cerr << "warning: duplicate term '" << fields[0] << "' in " << path
                << ", keeping the first row\n";
      continue;
    }
    m.vocab.push_back(fields[0]);
    for (size_t i = 1; i < fields.size(); ++i)
      m.input_vectors.push_back(parse_value(fields[i], path));
  }

  if (m.vocab.empty()) throw DataError(path + ": no embedding rows");
  m.rebuild_lookup();
  if (format == EmbeddingFormat::w2v_text && m.vocab.size() != expected_rows)
    std::cerr << "warning: " << path << " header says " << expected_rows << " rows, read "
              << m.vocab.size() << "\n";
  return m;
}

void save_embeddings(const EmbeddingMatrix& m, const std::string& path,
                     const std::string& header_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << m.vocab.size() << ' ' << m.dim << "\n";
  char buf[32];
  for (uint32_t r = 0; r < m.vocab.size(); ++r) {
    out << m.vocab[r];
    auto v = m.input_row(r);
    for (double x : v) {
      snprintf(buf, sizeof buf, "%.17g", x);
      out << ' ' << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Similarity

std::vector<Neighbor> neighbors(const EmbeddingMatrix& m, const std::string& term, size_t k) {
  auto row = m.row_of(term);
  if (!row) throw DataError("term '" + term + "' is not in the embedding vocabulary");

  auto tv = m.input_row(*row);
  double tnorm = std::sqrt(dot(tv, tv));

  std::vector<Neighbor> all;
  all.reserve(m.vocab.size() - 1);
  for (uint32_t r = 0; r < m.vocab.size(); ++r) {
    if (r == *row) continue;
    auto v = m.input_row(r);
    double norm = std::sqrt(dot(v, v));
    double sim = (tnorm == 0.0 || norm == 0.0) ? 0.0 : dot(tv, v) / (tnorm * norm);
    all.push_back({m.vocab[r], sim});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.term < b.term;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

StemResolver::StemResolver(const EmbeddingMatrix& m, const Stemmer& stemmer)
    : matrix_(m), stemmer_(stemmer) {
  for (uint32_t r = 0; r < m.vocab.size(); ++r)
    stemmed_vocab_.emplace(stemmer.stem(m.vocab[r]), r);  // first row wins
}

std::optional<uint32_t> StemResolver::resolve(const std::string& term) const {
  if (auto row = matrix_.row_of(term)) return row;
  auto it = stemmed_vocab_.find(stemmer_.stem(term));
  if (it == stemmed_vocab_.end()) return std::nullopt;
  return it->second;
}

std::optional<uint32_t> lookup_with_stem_fallback(const EmbeddingMatrix& m,
                                                  const std::string& term,
                                                  const Stemmer& stemmer) {
  return StemResolver(m, stemmer).resolve(term);
}

}  // namespace lwe
