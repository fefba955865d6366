#include "lwe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lwe/default_data.hpp"
#include "lwe/util.hpp"

namespace lwe {

namespace {

// ASCII-only classification: multi-byte UTF-8 sequences act as separators,
// which is the behavior we want for the English test collections here.
inline bool is_word_char(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline char to_lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : static_cast<char>(c);
}

std::string read_file_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Stemmer

Stemmer Stemmer::from_text(std::string_view text) {
  std::vector<Rule> rules;
  size_t pos = 0, lineno = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string_view::npos ? std::string_view::npos : line.find('\t', t1 + 1);
    if (t1 == std::string_view::npos || t2 == std::string_view::npos)
      throw DataError("stem rule line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    Rule r;
    r.suffix = std::string(line.substr(0, t1));
    r.replacement = std::string(line.substr(t1 + 1, t2 - t1 - 1));
    std::string min_field(line.substr(t2 + 1));
    if (r.suffix.empty()) throw DataError("stem rule line " + std::to_string(lineno) + ": empty suffix");
    try {
      r.min_stem = std::stoul(min_field);
    } catch (const std::exception&) {
      throw DataError("stem rule line " + std::to_string(lineno) + ": bad min-stem-length");
    }
    rules.push_back(std::move(r));
  }
  return Stemmer(std::move(rules));
}

Stemmer Stemmer::from_file(const std::string& path) {
  return from_text(read_file_or_throw(path));
}

const Stemmer& Stemmer::standard() {
  static const Stemmer instance = from_text(kDefaultStemRules);
  return instance;
}

std::string Stemmer::stem(const std::string& term) const {
  for (const Rule& r : rules_) {
    if (term.size() < r.suffix.size()) continue;
    size_t stem_len = term.size() - r.suffix.size();
    if (stem_len < r.min_stem) continue;
    if (term.compare(stem_len, r.suffix.size(), r.suffix) != 0) continue;
    return term.substr(0, stem_len) + r.replacement;
  }
  return term;
}

// ---------------------------------------------------------------------------
// Analyzer

std::unordered_set<std::string> Analyzer::load_stoplist(const std::string& path) {
  std::unordered_set<std::string> stoplist;
  std::istringstream in(read_file_or_throw(path));
  std::string word;
  while (std::getline(in, word)) {
    if (!word.empty() && word.back() == '\r') word.pop_back();
    if (!word.empty()) stoplist.insert(word);
  }
  return stoplist;
}

const Analyzer& Analyzer::standard() {
  static const Analyzer instance = [] {
    std::unordered_set<std::string> stoplist;
    std::istringstream in(kDefaultStoplist);
    std::string word;
    while (std::getline(in, word))
      if (!word.empty()) stoplist.insert(word);
    return Analyzer(std::move(stoplist), Stemmer::standard());
  }();
  return instance;
}

Analyzer Analyzer::from_files(const std::string& stoplist_path, const std::string& rules_path) {
  return Analyzer(load_stoplist(stoplist_path), Stemmer::from_file(rules_path));
}

std::vector<std::string> Analyzer::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (!is_stopword(cur)) out.push_back(stemmer_.stem(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (is_word_char(c))
      cur.push_back(to_lower_ascii(c));
    else
      flush();
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// LanguageModel

LanguageModel LanguageModel::from_weights(const std::map<std::string, double>& weights) {
  double total = 0.0;
  for (const auto& [term, w] : weights) {
    if (w < 0.0 || !std::isfinite(w))
      throw std::invalid_argument("negative or non-finite weight for term '" + term + "'");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("language model has no mass");
  LanguageModel lm;
  for (const auto& [term, w] : weights)
    if (w > 0.0) lm.probs_.emplace(term, w / total);
  return lm;
}

LanguageModel LanguageModel::from_probs(std::map<std::string, double> probs) {
  double total = 0.0;
  for (auto it = probs.begin(); it != probs.end();) {
    if (it->second < 0.0 || !std::isfinite(it->second))
      throw std::invalid_argument("negative or non-finite probability for term '" + it->first + "'");
    if (it->second == 0.0) {
      it = probs.erase(it);
    } else {
      total += it->second;
      ++it;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("probabilities do not sum to 1");
  LanguageModel lm;
  lm.probs_ = std::move(probs);
  return lm;
}

double LanguageModel::sum() const {
  double s = 0.0;
  for (const auto& [term, p] : probs_) s += p;
  return s;
}

// ---------------------------------------------------------------------------
// Index

std::optional<uint32_t> Index::term_id(const std::string& term) const {
  auto it = term_lookup_.find(term);
  if (it == term_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<uint32_t> Index::doc_index(const std::string& doc_id) const {
  auto it = doc_lookup_.find(doc_id);
  if (it == doc_lookup_.end()) return std::nullopt;
  return it->second;
}

uint32_t Index::term_frequency(uint32_t term_id, uint32_t doc) const {
  const auto& plist = postings_[term_id];
  auto it = std::lower_bound(plist.begin(), plist.end(), doc,
                             [](const Posting& p, uint32_t d) { return p.doc < d; });
  if (it == plist.end() || it->doc != doc) return 0;
  return it->tf;
}

void Index::finalize() {
  // Everything below is a pure function of doc_ids_ and doc_tokens_ holding
  // term *strings* replaced by ids; called with vocab_ already sorted.
  collection_tf_.assign(vocab_.size(), 0);
  postings_.assign(vocab_.size(), {});
  term_lookup_.clear();
  term_lookup_.reserve(vocab_.size());
  for (uint32_t t = 0; t < vocab_.size(); ++t) term_lookup_.emplace(vocab_[t], t);
  doc_lookup_.clear();
  doc_lookup_.reserve(doc_ids_.size());
  total_tokens_ = 0;

  std::vector<uint32_t> tf_scratch(vocab_.size(), 0);
  for (uint32_t d = 0; d < doc_ids_.size(); ++d) {
    auto [it, inserted] = doc_lookup_.emplace(doc_ids_[d], d);
    if (!inserted) throw DataError("duplicate document id '" + doc_ids_[d] + "'");
    std::vector<uint32_t> seen;
    for (uint32_t t : doc_tokens_[d]) {
      if (tf_scratch[t] == 0) seen.push_back(t);
      ++tf_scratch[t];
      ++collection_tf_[t];
    }
    total_tokens_ += doc_tokens_[d].size();
    std::sort(seen.begin(), seen.end());
    for (uint32_t t : seen) {
      postings_[t].push_back({d, tf_scratch[t]});
      tf_scratch[t] = 0;
    }
  }
}

Index build_index(const std::vector<Document>& docs, const Analyzer& analyzer) {
  std::vector<std::vector<std::string>> tokenized(docs.size());
  std::map<std::string, uint32_t> vocab_builder;
  for (size_t d = 0; d < docs.size(); ++d) {
    tokenized[d] = analyzer.tokenize(docs[d].text);
    for (const auto& t : tokenized[d]) vocab_builder.emplace(t, 0);
  }

  Index index;
  index.vocab_.reserve(vocab_builder.size());
  for (auto& [term, id] : vocab_builder) {
    id = static_cast<uint32_t>(index.vocab_.size());
    index.vocab_.push_back(term);
  }

  index.doc_ids_.reserve(docs.size());
  index.doc_tokens_.resize(docs.size());
  for (size_t d = 0; d < docs.size(); ++d) {
    index.doc_ids_.push_back(docs[d].id);
    index.doc_tokens_[d].reserve(tokenized[d].size());
    for (const auto& t : tokenized[d]) index.doc_tokens_[d].push_back(vocab_builder[t]);
  }
  index.finalize();
  return index;
}

std::vector<Document> read_corpus_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<Document> docs;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'id<TAB>text'");
    docs.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return docs;
}

// The on-disk form keeps only the vocabulary and the token sequences;
// postings and counts are recomputed on load.  Leading '#' lines are
// ignored so artifacts can carry provenance comments.
void Index::save(const std::string& path, const std::string& header_comment) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "lwe-index\t1\n";
  out << "vocab\t" << vocab_.size() << "\n";
  for (const auto& t : vocab_) out << "t\t" << t << "\n";
  out << "docs\t" << doc_ids_.size() << "\n";
  for (uint32_t d = 0; d < doc_ids_.size(); ++d) {
    out << "d\t" << doc_ids_[d] << "\t" << doc_tokens_[d].size();
    for (uint32_t t : doc_tokens_[d]) out << ' ' << t;
    out << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

Index Index::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  auto next_line = [&](bool allow_eof = false) -> bool {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line[0] == '#') continue;
      return true;
    }
    if (!allow_eof) throw DataError(path + ": truncated index file");
    return false;
  };

  next_line();
  if (line != "lwe-index\t1") throw DataError(path + ": not an index file");

  Index index;
  next_line();
  size_t vocab_size = 0;
  if (sscanf(line.c_str(), "vocab\t%zu", &vocab_size) != 1)
    throw DataError(path + ": bad vocab header");
  index.vocab_.reserve(vocab_size);
  for (size_t i = 0; i < vocab_size; ++i) {
    next_line();
    if (line.size() < 2 || line[0] != 't' || line[1] != '\t')
      throw DataError(path + ": bad term line");
    index.vocab_.push_back(line.substr(2));
  }
  if (!std::is_sorted(index.vocab_.begin(), index.vocab_.end()))
    throw DataError(path + ": vocabulary out of order");

  next_line();
  size_t doc_count = 0;
  if (sscanf(line.c_str(), "docs\t%zu", &doc_count) != 1)
    throw DataError(path + ": bad docs header");
  index.doc_ids_.reserve(doc_count);
  index.doc_tokens_.resize(doc_count);
  for (size_t d = 0; d < doc_count; ++d) {
    next_line();
    if (line.size() < 2 || line[0] != 'd' || line[1] != '\t')
      throw DataError(path + ": bad doc line");
    size_t tab2 = line.find('\t', 2);
    if (tab2 == std::string::npos) throw DataError(path + ": bad doc line");
    index.doc_ids_.push_back(line.substr(2, tab2 - 2));
    std::istringstream fields(line.substr(tab2 + 1));
    size_t len = 0;
    fields >> len;
    index.doc_tokens_[d].reserve(len);
    uint32_t t;
    while (fields >> t) {
      if (t >= index.vocab_.size()) throw DataError(path + ": term id out of range");
      index.doc_tokens_[d].push_back(t);
    }
    if (index.doc_tokens_[d].size() != len)
      throw DataError(path + ": document length mismatch for '" + index.doc_ids_.back() + "'");
  }
  index.finalize();
  return index;
}

// ---------------------------------------------------------------------------
// Language model construction

LanguageModel doc_lm(const Index& index, uint32_t doc) {
  uint64_t len = index.doc_length(doc);
  if (len == 0) throw DataError("document '" + index.doc_id(doc) + "' has no tokens");
  std::map<uint32_t, uint32_t> counts;
  for (uint32_t t : index.doc_tokens(doc)) ++counts[t];
  std::map<std::string, double> probs;
  for (const auto& [t, tf] : counts)
    probs.emplace(index.term(t), static_cast<double>(tf) / static_cast<double>(len));
  return LanguageModel::from_probs(std::move(probs));
}

LanguageModel doc_lm(const Index& index, const std::string& doc_id) {
  auto d = index.doc_index(doc_id);
  if (!d) throw DataError("unknown document id '" + doc_id + "'");
  return doc_lm(index, *d);
}

LanguageModel corpus_lm(const Index& index) {
  if (index.total_tokens() == 0) throw DataError("index holds no tokens");
  std::map<std::string, double> probs;
  const auto& vocab = index.vocabulary();
  double total = static_cast<double>(index.total_tokens());
  for (uint32_t t = 0; t < vocab.size(); ++t)
    probs.emplace(vocab[t], static_cast<double>(index.collection_tf(t)) / total);
  return LanguageModel::from_probs(std::move(probs));
}

}  // namespace lwe
