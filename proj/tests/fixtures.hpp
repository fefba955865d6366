#pragma once

// Synthetic collections shared between the unit tests and the acceptance
// suite.  Everything is driven by lwe::Rng so fixtures are reproducible.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lwe/corpus.hpp"
#include "lwe/util.hpp"

namespace fixtures {

// Analyzer with no stoplist and no stem rules: tokens pass through verbatim
// (lowercased, split on non-alphanumerics).  Used where tests need exact
// control over the resulting vocabulary.
inline lwe::Analyzer plain_analyzer() {
  return lwe::Analyzer({}, lwe::Stemmer());
}

inline std::vector<std::string> make_vocab(size_t n, const std::string& prefix = "w") {
  std::vector<std::string> vocab;
  vocab.reserve(n);
  for (size_t i = 0; i < n; ++i) vocab.push_back(prefix + std::to_string(i));
  return vocab;
}

// Documents of random length in [min_len, max_len], terms drawn uniformly
// from the vocabulary.  Zipf realism is irrelevant for the counting and
// scoring oracles these feed.
inline std::vector<lwe::Document> make_random_corpus(lwe::Rng& rng, size_t n_docs,
                                                     const std::vector<std::string>& vocab,
                                                     size_t min_len, size_t max_len) {
  std::vector<lwe::Document> docs;
  docs.reserve(n_docs);
  for (size_t d = 0; d < n_docs; ++d) {
    size_t len = min_len + static_cast<size_t>(rng.next_below(max_len - min_len + 1));
    std::string text;
    for (size_t i = 0; i < len; ++i) {
      if (i) text += ' ';
      text += vocab[rng.next_below(vocab.size())];
    }
    docs.push_back({"doc" + std::to_string(d), text});
  }
  return docs;
}

// Two disjoint topics sharing one ambiguous term.  Every topic document
// contains the shared term and the topic anchor, so retrieving the anchor
// recovers exactly that topic's documents.
struct TwoTopicFixture {
  std::vector<lwe::Document> docs;
  std::string shared = "cut";
  std::string anchor_a = "tax";
  std::string anchor_b = "knife";
  std::vector<std::string> sense_a;  // includes the anchor
  std::vector<std::string> sense_b;
};

inline TwoTopicFixture two_topic_corpus(lwe::Rng& rng, size_t docs_per_topic, size_t doc_len) {
  TwoTopicFixture fx;
  fx.sense_a = {"tax", "budget", "deficit", "revenue", "senate", "levy", "surplus", "fiscal"};
  fx.sense_b = {"knife", "blade", "steel", "sharp", "wound", "scissors", "slice", "handle"};
  auto make_topic = [&](const std::string& label, const std::string& anchor,
                        const std::vector<std::string>& sense) {
    for (size_t d = 0; d < docs_per_topic; ++d) {
      std::string text = fx.shared + " " + anchor;
      for (size_t i = 2; i < doc_len; ++i) {
        text += ' ';
        if (rng.next_double() < 0.2)
          text += fx.shared;
        else
          text += sense[rng.next_below(sense.size())];
      }
      fx.docs.push_back({label + std::to_string(d), text});
    }
  };
  make_topic("fiscal", fx.anchor_a, fx.sense_a);
  make_topic("blade", fx.anchor_b, fx.sense_b);
  return fx;
}

// Collection where each query's relevant documents carry a planted synonym
// of the query's subject term but never the term itself.  An anchor context
// term keeps them retrievable; distractor documents carrying the subject
// term itself always outscore them on the plain query.
struct SynonymFixture {
  std::vector<lwe::Document> docs;
  std::vector<std::pair<std::string, std::string>> queries;        // id, text
  std::map<std::string, std::map<std::string, int>> judgments;     // qid -> doc -> grade
  size_t distractors_per_query = 0;
};

inline SynonymFixture synonym_collection(lwe::Rng& rng, size_t n_queries, size_t relevant = 5,
                                         size_t distractors = 15) {
  SynonymFixture fx;
  fx.distractors_per_query = distractors;
  auto filler = make_vocab(20, "fill");
  auto some_fillers = [&](size_t n) {
    std::string out;
    for (size_t i = 0; i < n; ++i) {
      if (i) out += ' ';
      out += filler[rng.next_below(filler.size())];
    }
    return out;
  };

  for (size_t q = 0; q < n_queries; ++q) {
    std::string subject = "subject" + std::to_string(q);
    std::string synonym = "synonym" + std::to_string(q);
    std::string anchor = "anchor" + std::to_string(q);
    std::string qid = "q" + std::to_string(q);
    fx.queries.emplace_back(qid, subject + " " + anchor);

    for (size_t r = 0; r < relevant; ++r) {
      std::string id = qid + "_rel" + std::to_string(r);
      fx.docs.push_back({id, synonym + " " + synonym + " " + synonym + " " + anchor + " " +
                                 anchor + " " + some_fillers(3)});
      fx.judgments[qid][id] = 1;
    }
    for (size_t d = 0; d < distractors; ++d) {
      std::string id = qid + "_dis" + std::to_string(d);
      fx.docs.push_back({id, subject + " " + anchor + " " + anchor + " " + some_fillers(5)});
      fx.judgments[qid][id] = 0;
    }
  }
  for (size_t b = 0; b < 30; ++b)
    fx.docs.push_back({"bg" + std::to_string(b), some_fillers(8)});
  return fx;
}

}  // namespace fixtures
