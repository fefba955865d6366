#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lwe/corpus.hpp"
#include "lwe/util.hpp"

namespace lwe {

// Two projection matrices over a private vocabulary.  input_vectors holds
// the word representations used everywhere downstream (similarity, query
// expansion); output_vectors holds the context-side projections and is empty
// for models loaded from files.
struct EmbeddingMatrix {
  std::vector<std::string> vocab;
  std::vector<double> input_vectors;   // row-major vocab.size() x dim
  std::vector<double> output_vectors;  // row-major, same shape or empty
  size_t dim = 0;

  std::span<const double> input_row(uint32_t row) const {
    return {input_vectors.data() + static_cast<size_t>(row) * dim, dim};
  }
  std::span<double> input_row(uint32_t row) {
    return {input_vectors.data() + static_cast<size_t>(row) * dim, dim};
  }
  std::span<const double> output_row(uint32_t row) const {
    return {output_vectors.data() + static_cast<size_t>(row) * dim, dim};
  }
  std::span<double> output_row(uint32_t row) {
    return {output_vectors.data() + static_cast<size_t>(row) * dim, dim};
  }

  std::optional<uint32_t> row_of(const std::string& term) const;
  void rebuild_lookup();

 private:
  std::unordered_map<std::string, uint32_t> lookup_;
};

struct TrainConfig {
  size_t dim = 400;
  size_t window = 5;          // maximum context radius; shrunk per position
  size_t negatives = 5;
  double learning_rate = 0.05;
  size_t iterations = 80;     // passes over the sampled documents
  size_t sample_count = 1000; // documents drawn per sample
  double subsample = 1e-3;    // frequent-word threshold, 0 disables
  size_t min_count = 1;
  uint64_t seed = 1;
  size_t threads = 1;         // >1 races updates and gives up determinism
  bool resample_each_pass = false;
};

// One prediction task: the word at a position and the surviving context
// positions around it.  context is never empty and never contains the
// target position itself.
struct TrainingInstance {
  uint32_t target;                // row of the predicted word
  std::vector<uint32_t> context;  // rows of the context words
};

// log sigmoid(w.c) + sum_i log sigmoid(-w.n_i): the sampled objective for a
// single instance.  Always negative; 0 is the unreachable perfect score.
double instance_loss(std::span<const double> target_vec, std::span<const double> context_vec,
                     const std::vector<std::vector<double>>& negative_vecs);

// Same quantity assembled from the matrix: context_vec is the mean of the
// context words' output rows, negatives index output rows.
double instance_loss(const TrainingInstance& inst, const EmbeddingMatrix& m,
                     const std::vector<uint32_t>& negatives);

// Ascent gradient of instance_loss with respect to every touched row.
// Repeated rows (a duplicated negative, a word serving as two context
// positions) accumulate into a single entry.
struct RowGrad {
  uint32_t row;
  std::vector<double> grad;
};
struct InstanceGradient {
  std::vector<RowGrad> input;   // exactly one entry: the target row
  std::vector<RowGrad> output;  // context rows and negative rows
};
InstanceGradient instance_gradient(const TrainingInstance& inst, const EmbeddingMatrix& m,
                                   const std::vector<uint32_t>& negatives);

// Noise distribution for negative draws: unigram counts raised to 0.75 and
// renormalized, sampled by inverse CDF so draws depend only on the Rng state.
class NoiseTable {
 public:
  explicit NoiseTable(const std::vector<uint64_t>& counts);
  uint32_t draw(Rng& rng) const;
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

// Produces the documents to train on; called with a seed derived from
// TrainConfig::seed (once up front, or per pass when resample_each_pass).
using DocSampler = std::function<std::vector<std::string>(uint64_t seed)>;

DocSampler all_docs_sampler(const Index& index);
DocSampler posterior_sampler(const struct DocPosterior& posterior, size_t count);

struct TrainResult {
  EmbeddingMatrix embedding;
  std::vector<double> pass_loss;  // mean negative instance objective per pass
};

// CBOW with negative sampling over the sampled documents.  Sentence
// boundaries are document boundaries.  With threads == 1 the result is a
// pure function of (sample, config); the optional threaded mode updates rows
// without coordination and is not reproducible.
TrainResult train(const DocSampler& sampler, const Index& index, const TrainConfig& config);
TrainResult train(const std::vector<std::string>& doc_ids, const Index& index,
                  const TrainConfig& config);

enum class EmbeddingFormat {
  glove_text,  // term v1 .. vk, no header
  w2v_text,    // "vocab_size dim" header, then glove-style rows
};

// Duplicate terms keep the first row (with a warning on stderr); ragged rows
// and non-finite values are hard errors.  Lines starting with '#' ahead of
// the data are ignored.
EmbeddingMatrix load_embeddings(const std::string& path, EmbeddingFormat format);

// Writes input_vectors in w2v_text form; load_embeddings inverts it.
void save_embeddings(const EmbeddingMatrix& m, const std::string& path,
                     const std::string& header_comment = "");

struct Neighbor {
  std::string term;
  double similarity;
};

// k nearest vocabulary entries by cosine over input_vectors, excluding the
// term itself; ties break lexicographically.  Zero vectors have cosine 0 by
// convention.
std::vector<Neighbor> neighbors(const EmbeddingMatrix& m, const std::string& term, size_t k);

// Exact vocabulary match first; otherwise the term's stem is looked up in a
// stemmed view of the vocabulary (first matching row wins).  Lets stemmed
// index terms meet the raw vocabularies of externally trained embeddings.
class StemResolver {
 public:
  StemResolver(const EmbeddingMatrix& m, const Stemmer& stemmer);
  std::optional<uint32_t> resolve(const std::string& term) const;

 private:
  const EmbeddingMatrix& matrix_;
  const Stemmer& stemmer_;
  std::unordered_map<std::string, uint32_t> stemmed_vocab_;  // stem -> first row
};

std::optional<uint32_t> lookup_with_stem_fallback(const EmbeddingMatrix& m,
                                                  const std::string& term,
                                                  const Stemmer& stemmer);

}  // namespace lwe
