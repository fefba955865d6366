#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace lwe {

struct Document {
  std::string id;
  std::string text;
};

// Suffix-rewrite stemmer driven by an ordered rule table; the first matching
// rule is applied and no further rules are tried.  Covers inflectional
// morphology only, so output is stable under re-stemming.
class Stemmer {
 public:
  struct Rule {
    std::string suffix;
    std::string replacement;
    size_t min_stem;  // characters that must remain left of the suffix
  };

  Stemmer() = default;
  explicit Stemmer(std::vector<Rule> rules) : rules_(std::move(rules)) {}

  static Stemmer from_file(const std::string& path);
  static Stemmer from_text(std::string_view text);
  // Built-in copy of data/stem_rules.tsv.
  static const Stemmer& standard();

  std::string stem(const std::string& term) const;

  const std::vector<Rule>& rules() const { return rules_; }

 private:
  std::vector<Rule> rules_;
};

// Lowercasing tokenizer with stopword removal and stemming.  Stopwords are
// matched against the surface form, before stemming.
class Analyzer {
 public:
  Analyzer(std::unordered_set<std::string> stoplist, Stemmer stemmer)
      : stoplist_(std::move(stoplist)), stemmer_(std::move(stemmer)) {}

  // SMART stoplist + built-in stem rules.
  static const Analyzer& standard();
  static Analyzer from_files(const std::string& stoplist_path,
                             const std::string& rules_path);
  static std::unordered_set<std::string> load_stoplist(const std::string& path);

  std::vector<std::string> tokenize(std::string_view text) const;

  const Stemmer& stemmer() const { return stemmer_; }
  bool is_stopword(const std::string& term) const { return stoplist_.count(term) > 0; }
  size_t stoplist_size() const { return stoplist_.size(); }

 private:
  std::unordered_set<std::string> stoplist_;
  Stemmer stemmer_;
};

// Sparse unigram distribution.  Every stored probability is strictly
// positive and the entries sum to 1 within 1e-9; zero-probability terms are
// never stored.  Ordered storage keeps downstream accumulations reproducible.
class LanguageModel {
 public:
  LanguageModel() = default;

  // Normalizes nonnegative weights; total mass must be positive.
  static LanguageModel from_weights(const std::map<std::string, double>& weights);
  // Accepts an already normalized distribution; validates the invariants.
  static LanguageModel from_probs(std::map<std::string, double> probs);

  double prob(const std::string& term) const {
    auto it = probs_.find(term);
    return it == probs_.end() ? 0.0 : it->second;
  }
  bool contains(const std::string& term) const { return probs_.count(term) > 0; }
  size_t size() const { return probs_.size(); }
  bool empty() const { return probs_.empty(); }
  double sum() const;
  const std::map<std::string, double>& probs() const { return probs_; }

  auto begin() const { return probs_.begin(); }
  auto end() const { return probs_.end(); }

 private:
  std::map<std::string, double> probs_;
};

// Inverted index plus per-document token sequences.  Term ids are positions
// in the lexicographically sorted vocabulary, so ids are reproducible across
// rebuilds of the same corpus; document indices follow input order.
class Index {
 public:
  struct Posting {
    uint32_t doc;  // document index
    uint32_t tf;
  };

  size_t doc_count() const { return doc_ids_.size(); }
  uint64_t total_tokens() const { return total_tokens_; }

  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::optional<uint32_t> term_id(const std::string& term) const;
  const std::string& term(uint32_t term_id) const { return vocab_[term_id]; }
  uint64_t collection_tf(uint32_t term_id) const { return collection_tf_[term_id]; }
  const std::vector<Posting>& postings(uint32_t term_id) const { return postings_[term_id]; }

  std::optional<uint32_t> doc_index(const std::string& doc_id) const;
  const std::string& doc_id(uint32_t doc) const { return doc_ids_[doc]; }
  uint64_t doc_length(uint32_t doc) const { return doc_tokens_[doc].size(); }
  // Token sequence in document order, as term ids.
  const std::vector<uint32_t>& doc_tokens(uint32_t doc) const { return doc_tokens_[doc]; }

  // 0 when the term does not occur in the document.
  uint32_t term_frequency(uint32_t term_id, uint32_t doc) const;

  void save(const std::string& path, const std::string& header_comment = "") const;
  static Index load(const std::string& path);

  friend Index build_index(const std::vector<Document>& docs, const Analyzer& analyzer);

 private:
  std::vector<std::string> vocab_;                  // sorted
  std::vector<uint64_t> collection_tf_;             // by term id
  std::vector<std::vector<Posting>> postings_;      // by term id, doc ascending
  std::unordered_map<std::string, uint32_t> term_lookup_;
  std::vector<std::string> doc_ids_;                // by document index
  std::vector<std::vector<uint32_t>> doc_tokens_;   // by document index
  std::unordered_map<std::string, uint32_t> doc_lookup_;
  uint64_t total_tokens_ = 0;

  void finalize();  // rebuild postings, counts and lookups from doc_tokens_
};

// Duplicate document ids are a hard error; empty documents are kept (they
// contribute no postings but remain addressable).
Index build_index(const std::vector<Document>& docs, const Analyzer& analyzer);

// One document per line: id <TAB> text.  UTF-8 passed through unchanged.
std::vector<Document> read_corpus_file(const std::string& path);

// Maximum-likelihood model of a single document; zero-length documents have
// no model and raise DataError.
LanguageModel doc_lm(const Index& index, const std::string& doc_id);
LanguageModel doc_lm(const Index& index, uint32_t doc);

// Maximum-likelihood model of the whole collection.  Equals the
// length-weighted mixture of the document models.
LanguageModel corpus_lm(const Index& index);

}  // namespace lwe
