#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "lwe/corpus.hpp"
#include "lwe/embedding.hpp"
#include "lwe/retrieval.hpp"
#include "lwe/util.hpp"

using namespace lwe;

namespace {

// Scalar restatement of the sampled objective, kept free of the span
// plumbing the implementation uses.
double loss_oracle(const std::vector<double>& w, const std::vector<double>& c,
                   const std::vector<std::vector<double>>& negs) {
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  double loss = std::log(1.0 / (1.0 + std::exp(-dot(w, c))));
  for (const auto& n : negs) loss += std::log(1.0 / (1.0 + std::exp(dot(w, n))));
  return loss;
}

EmbeddingMatrix random_matrix(Rng& rng, const std::vector<std::string>& vocab, size_t dim) {
  EmbeddingMatrix m;
  m.vocab = vocab;
  m.dim = dim;
  m.input_vectors.resize(vocab.size() * dim);
  m.output_vectors.resize(vocab.size() * dim);
  for (auto& v : m.input_vectors) v = rng.next_range(-1.0, 1.0);
  for (auto& v : m.output_vectors) v = rng.next_range(-1.0, 1.0);
  m.rebuild_lookup();
  return m;
}

Index tiny_index(const std::vector<Document>& docs) {
  return build_index(docs, fixtures::plain_analyzer());
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("instance objective at the zero point is (1 + negatives) * log 2") {
  std::vector<double> zero(4, 0.0);
  const double log2 = std::log(2.0);
  CHECK(instance_loss(zero, zero, {zero}) == doctest::Approx(-2 * log2).epsilon(1e-12));
  CHECK(instance_loss(zero, zero, {zero, zero, zero}) ==
        doctest::Approx(-4 * log2).epsilon(1e-12));
  CHECK(instance_loss(zero, zero, {}) == doctest::Approx(-log2).epsilon(1e-12));
}

TEST_CASE("instance objective approaches zero when the model is confident") {
  std::vector<double> w = {30.0, 0.0};
  std::vector<double> c = {1.0, 0.0};
  std::vector<double> n = {-1.0, 0.0};
  double loss = instance_loss(w, c, {n, n});
  CHECK(loss < 0.0);
  CHECK(loss > -1e-10);
}

TEST_CASE("instance objective matches the scalar formula on random vectors") {
  Rng rng(11);
  for (int round = 0; round < 50; ++round) {
    size_t k = 1 + rng.next_below(6);
    auto vec = [&] {
      std::vector<double> v(k);
      for (auto& x : v) x = rng.next_range(-2.0, 2.0);
      return v;
    };
    auto w = vec(), c = vec();
    std::vector<std::vector<double>> negs;
    for (size_t i = rng.next_below(4); i-- > 0;) negs.push_back(vec());
    CHECK(instance_loss(w, c, negs) ==
          doctest::Approx(loss_oracle(w, c, negs)).epsilon(1e-12));
  }
}

TEST_CASE("matrix form of the objective averages the context output rows") {
  Rng rng(12);
  auto m = random_matrix(rng, fixtures::make_vocab(6), 3);
  TrainingInstance inst{0, {1, 3, 3}};
  std::vector<uint32_t> negs = {2, 4};

  std::vector<double> mean(3, 0.0);
  for (uint32_t c : inst.context)
    for (size_t j = 0; j < 3; ++j) mean[j] += m.output_vectors[c * 3 + j] / 3.0;
  std::vector<double> w(m.input_row(0).begin(), m.input_row(0).end());
  std::vector<std::vector<double>> nvecs;
  for (uint32_t n : negs)
    nvecs.emplace_back(m.output_row(n).begin(), m.output_row(n).end());

  CHECK(instance_loss(inst, m, negs) ==
        doctest::Approx(loss_oracle(w, mean, nvecs)).epsilon(1e-12));
  CHECK_THROWS_AS(instance_loss(TrainingInstance{0, {}}, m, negs), std::invalid_argument);
}

TEST_CASE("analytic row gradients match central differences") {
  Rng rng(13);
  const size_t dim = 8;
  auto m = random_matrix(rng, fixtures::make_vocab(12), dim);
  TrainingInstance inst{0, {1, 2, 3}};
  std::vector<uint32_t> negs = {4, 5, 4};  // duplicate on purpose
  const double h = 1e-5;

  auto grads = instance_gradient(inst, m, negs);
  REQUIRE(grads.input.size() == 1);
  CHECK(grads.input[0].row == 0);
  // context rows 1,2,3 and distinct negatives 4,5: one entry each
  REQUIRE(grads.output.size() == 5);

  auto check_row = [&](bool input_side, const RowGrad& rg) {
    auto& store = input_side ? m.input_vectors : m.output_vectors;
    for (size_t j = 0; j < dim; ++j) {
      size_t cell = rg.row * dim + j;
      double saved = store[cell];
      store[cell] = saved + h;
      double up = instance_loss(inst, m, negs);
      store[cell] = saved - h;
      double down = instance_loss(inst, m, negs);
      store[cell] = saved;
      double fd = (up - down) / (2 * h);
      double denom = std::max(std::abs(fd) + std::abs(rg.grad[j]), 1e-8);
      CHECK(std::abs(fd - rg.grad[j]) / denom < 1e-4);
    }
  };
  check_row(true, grads.input[0]);
  for (const auto& rg : grads.output) check_row(false, rg);
}

TEST_CASE("gradient at the zero point is exactly zero") {
  EmbeddingMatrix m;
  m.vocab = fixtures::make_vocab(4);
  m.dim = 3;
  m.input_vectors.assign(12, 0.0);
  m.output_vectors.assign(12, 0.0);
  m.rebuild_lookup();
  auto grads = instance_gradient(TrainingInstance{0, {1}}, m, {2, 3});
  for (double g : grads.input[0].grad) CHECK(g == 0.0);
  for (const auto& rg : grads.output)
    for (double g : rg.grad) CHECK(g == 0.0);
}

TEST_CASE("a repeated negative contributes twice to its row gradient") {
  Rng rng(14);
  auto m = random_matrix(rng, fixtures::make_vocab(6), 4);
  TrainingInstance inst{0, {1}};
  auto once = instance_gradient(inst, m, {3});
  auto twice = instance_gradient(inst, m, {3, 3});

  auto find_row = [](const InstanceGradient& g, uint32_t row) {
    for (const auto& rg : g.output)
      if (rg.row == row) return rg.grad;
    REQUIRE(false);
    return std::vector<double>{};
  };
  auto g1 = find_row(once, 3);
  auto g2 = find_row(twice, 3);
  for (size_t j = 0; j < 4; ++j) CHECK(g2[j] == doctest::Approx(2 * g1[j]).epsilon(1e-12));
}

TEST_CASE("noise draws follow the 0.75-power unigram distribution") {
  std::vector<uint64_t> counts = {100, 50, 10, 5, 200, 1, 30, 80, 15, 60};
  NoiseTable table(counts);

  double norm = 0;
  for (uint64_t c : counts) norm += std::pow(double(c), 0.75);
  for (size_t i = 0; i < counts.size(); ++i)
    CHECK(table.probs()[i] == doctest::Approx(std::pow(double(counts[i]), 0.75) / norm));

  Rng rng(99);
  std::vector<size_t> hits(counts.size(), 0);
  const size_t draws = 1000000;
  for (size_t i = 0; i < draws; ++i) ++hits[table.draw(rng)];
  for (size_t i = 0; i < counts.size(); ++i) {
    double freq = double(hits[i]) / draws;
    CHECK(std::abs(freq - table.probs()[i]) < 0.01);
  }
}

TEST_CASE("shared context pulls paradigmatic words together") {
  std::vector<Document> docs;
  for (int i = 0; i < 120; ++i) {
    docs.push_back({"a" + std::to_string(i), "sun sky"});
    docs.push_back({"b" + std::to_string(i), "moon sky"});
    docs.push_back({"c" + std::to_string(i), "rock dirt"});
  }
  auto index = tiny_index(docs);

  TrainConfig cfg;
  cfg.dim = 8;
  cfg.window = 3;
  cfg.negatives = 5;
  cfg.iterations = 25;
  cfg.subsample = 0;
  cfg.seed = 3;
  auto result = train(all_docs_sampler(index), index, cfg);

  auto near = neighbors(result.embedding, "sun", 2);
  REQUIRE(!near.empty());
  CHECK(near[0].term == "moon");

  SUBCASE("objective improves over the passes") {
    REQUIRE(result.pass_loss.size() == cfg.iterations);
    double head = 0, tail = 0;
    for (int i = 0; i < 3; ++i) {
      head += result.pass_loss[i];
      tail += result.pass_loss[cfg.iterations - 1 - i];
    }
    CHECK(tail < head);
    for (double l : result.pass_loss) CHECK(l >= 0.0);
  }
}

TEST_CASE("training is a pure function of sample and config") {
  Rng rng(21);
  auto corpus = fixtures::make_random_corpus(rng, 40, fixtures::make_vocab(30), 5, 15);
  auto index = tiny_index(corpus);

  TrainConfig cfg;
  cfg.dim = 16;
  cfg.iterations = 4;
  cfg.sample_count = 60;
  cfg.seed = 7;

  auto posterior = DocPosterior{};
  for (const auto& d : corpus) posterior.docs.emplace_back(d.id, 1.0 / corpus.size());
  auto sampler = posterior_sampler(posterior, cfg.sample_count);

  auto r1 = train(sampler, index, cfg);
  auto r2 = train(sampler, index, cfg);
  CHECK(r1.embedding.vocab == r2.embedding.vocab);
  CHECK(r1.embedding.input_vectors == r2.embedding.input_vectors);
  CHECK(r1.embedding.output_vectors == r2.embedding.output_vectors);
  CHECK(r1.pass_loss == r2.pass_loss);

  SUBCASE("a different seed moves the vectors") {
    cfg.seed = 8;
    auto r3 = train(sampler, index, cfg);
    CHECK(r1.embedding.input_vectors != r3.embedding.input_vectors);
  }
}

TEST_CASE("zero learning rate leaves the deterministic initialization intact") {
  std::vector<Document> docs = {{"d1", "sun sky"}, {"d2", "moon sky"}, {"d3", "rock dirt"}};
  auto index = tiny_index(docs);

  TrainConfig cfg;
  cfg.dim = 4;
  cfg.iterations = 1;
  cfg.learning_rate = 0.0;
  cfg.subsample = 0;
  cfg.seed = 5;
  auto result = train(all_docs_sampler(index), index, cfg);
  const auto& m = result.embedding;

  // vocabulary keeps index term order (lexicographic)
  std::vector<std::string> expect = {"dirt", "moon", "rock", "sky", "sun"};
  CHECK(m.vocab == expect);

  Rng init(cfg.seed);
  double bound = 0.5 / cfg.dim;
  for (size_t i = 0; i < m.input_vectors.size(); ++i)
    CHECK(m.input_vectors[i] == init.next_range(-bound, bound));
  for (double v : m.output_vectors) CHECK(v == 0.0);
}

TEST_CASE("sampler invocation count follows the resample flag") {
  std::vector<Document> docs = {{"d1", "sun sky sun sky"}, {"d2", "moon sky moon sky"}};
  auto index = tiny_index(docs);

  size_t calls = 0;
  DocSampler counting = [&](uint64_t) {
    ++calls;
    return std::vector<std::string>{"d1", "d2"};
  };

  TrainConfig cfg;
  cfg.dim = 4;
  cfg.iterations = 3;
  cfg.subsample = 0;
  train(counting, index, cfg);
  CHECK(calls == 1);

  calls = 0;
  cfg.resample_each_pass = true;
  train(counting, index, cfg);
  CHECK(calls == 3);
}

TEST_CASE("rare terms fall below min_count and leave the vocabulary") {
  std::vector<Document> docs = {{"d1", "sun sky sun sky sun"},
                                {"d2", "moon sky moon sky moon"},
                                {"d3", "comet sky"}};
  auto index = tiny_index(docs);

  TrainConfig cfg;
  cfg.dim = 4;
  cfg.iterations = 2;
  cfg.min_count = 2;
  cfg.subsample = 0;
  auto result = train(all_docs_sampler(index), index, cfg);

  CHECK(result.embedding.row_of("comet") == std::nullopt);
  CHECK(result.embedding.row_of("sun").has_value());
  CHECK_THROWS_AS(neighbors(result.embedding, "comet", 3), DataError);
}

TEST_CASE("trainer rejects unusable configurations and samples") {
  std::vector<Document> docs = {{"d1", "sun sky"}};
  auto index = tiny_index(docs);
  TrainConfig cfg;
  cfg.dim = 4;
  cfg.iterations = 2;

  SUBCASE("no documents") {
    CHECK_THROWS_AS(train(std::vector<std::string>{}, index, cfg), DataError);
  }
  SUBCASE("unknown document id") {
    CHECK_THROWS_AS(train({"nope"}, index, cfg), DataError);
  }
  SUBCASE("zero iterations") {
    cfg.iterations = 0;
    CHECK_THROWS_AS(train({"d1"}, index, cfg), std::invalid_argument);
  }
  SUBCASE("zero dimension") {
    cfg.dim = 0;
    CHECK_THROWS_AS(train({"d1"}, index, cfg), std::invalid_argument);
  }
  SUBCASE("zero window") {
    cfg.window = 0;
    CHECK_THROWS_AS(train({"d1"}, index, cfg), std::invalid_argument);
  }
  SUBCASE("negative learning rate") {
    cfg.learning_rate = -0.1;
    CHECK_THROWS_AS(train({"d1"}, index, cfg), std::invalid_argument);
  }
  SUBCASE("min_count empties the vocabulary") {
    cfg.min_count = 100;
    CHECK_THROWS_AS(train({"d1"}, index, cfg), DataError);
  }
}

TEST_CASE("text formats round-trip exactly") {
  EmbeddingMatrix m;
  m.vocab = {"alpha", "beta"};
  m.dim = 3;
  m.input_vectors = {0.1234567890123456789, -2.5, 1e-17, 3.0, -0.000125, 7.25};
  m.rebuild_lookup();

  auto w2v = temp_file("lwe_test_embed.w2v");
  save_embeddings(m, w2v.string(), "trained on nothing");
  auto loaded = load_embeddings(w2v.string(), EmbeddingFormat::w2v_text);
  CHECK(loaded.vocab == m.vocab);
  CHECK(loaded.dim == m.dim);
  CHECK(loaded.input_vectors == m.input_vectors);
  CHECK(loaded.output_vectors.empty());

  SUBCASE("glove form is the same rows without the header") {
    auto glove = temp_file("lwe_test_embed.glove");
    std::ofstream out(glove);
    out << "# exported\n";
    std::ifstream in(w2v);
    std::string line;
    std::getline(in, line);  // drop the save comment
    std::getline(in, line);  // drop the count header
    while (std::getline(in, line)) out << line << "\n";
    out.close();
    auto g = load_embeddings(glove.string(), EmbeddingFormat::glove_text);
    CHECK(g.vocab == m.vocab);
    CHECK(g.input_vectors == m.input_vectors);
    std::filesystem::remove(glove);
  }
  std::filesystem::remove(w2v);
}

TEST_CASE("loader rejects malformed files and keeps first duplicate") {
  auto write = [](const std::string& name, const std::string& body) {
    auto p = temp_file(name);
    std::ofstream(p) << body;
    return p;
  };

  SUBCASE("ragged rows") {
    auto p = write("lwe_ragged.txt", "a 1.0 2.0\nb 3.0\n");
    CHECK_THROWS_AS(load_embeddings(p.string(), EmbeddingFormat::glove_text), DataError);
    std::filesystem::remove(p);
  }
  SUBCASE("non-numeric value") {
    auto p = write("lwe_nonnum.txt", "a 1.0 oops\n");
    CHECK_THROWS_AS(load_embeddings(p.string(), EmbeddingFormat::glove_text), DataError);
    std::filesystem::remove(p);
  }
  SUBCASE("non-finite value") {
    auto p = write("lwe_inf.txt", "a 1.0 inf\n");
    CHECK_THROWS_AS(load_embeddings(p.string(), EmbeddingFormat::glove_text), DataError);
    std::filesystem::remove(p);
  }
  SUBCASE("empty file") {
    auto p = write("lwe_empty.txt", "");
    CHECK_THROWS_AS(load_embeddings(p.string(), EmbeddingFormat::glove_text), DataError);
    std::filesystem::remove(p);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_embeddings("/nonexistent/embeddings.txt", EmbeddingFormat::glove_text),
                    DataError);
  }
  SUBCASE("bad header") {
    auto p = write("lwe_badheader.txt", "2 3 extra\na 1 2 3\n");
    CHECK_THROWS_AS(load_embeddings(p.string(), EmbeddingFormat::w2v_text), DataError);
    std::filesystem::remove(p);
  }
  SUBCASE("duplicate terms keep the first row") {
    auto p = write("lwe_dup.txt", "a 1.0 2.0\na 9.0 9.0\nb 3.0 4.0\n");
    auto m = load_embeddings(p.string(), EmbeddingFormat::glove_text);
    REQUIRE(m.vocab.size() == 2);
    CHECK(m.vocab[0] == "a");
    CHECK(m.input_vectors[0] == 1.0);
    CHECK(m.input_vectors[1] == 2.0);
    CHECK(*m.row_of("b") == 1);
    std::filesystem::remove(p);
  }
  SUBCASE("comment lines before the data are skipped") {
    auto p = write("lwe_comments.txt", "# produced by a tool\n# second line\na 1.0 2.0\n");
    auto m = load_embeddings(p.string(), EmbeddingFormat::glove_text);
    CHECK(m.vocab == std::vector<std::string>{"a"});
    std::filesystem::remove(p);
  }
}

TEST_CASE("neighbor ranking is cosine with lexicographic ties") {
  EmbeddingMatrix m;
  m.vocab = {"a", "b", "c", "d", "z"};
  m.dim = 2;
  m.input_vectors = {1, 0,   // a
                     1, 0,   // b: cosine 1 with a
                     0, 1,   // c: cosine 0
                     -1, 0,  // d: cosine -1
                     0, 0};  // z: zero vector, cosine 0 by convention
  m.rebuild_lookup();

  auto near = neighbors(m, "a", 10);
  REQUIRE(near.size() == 4);
  CHECK(near[0].term == "b");
  CHECK(near[0].similarity == doctest::Approx(1.0));
  CHECK(near[1].term == "c");  // ties with z at 0, earlier lexicographically
  CHECK(near[2].term == "z");
  CHECK(near[3].term == "d");

  CHECK(neighbors(m, "a", 2).size() == 2);
  CHECK_THROWS_AS(neighbors(m, "missing", 3), DataError);
}

TEST_CASE("neighbor scores agree with a direct cosine scan") {
  Rng rng(31);
  auto m = random_matrix(rng, fixtures::make_vocab(20), 8);
  auto near = neighbors(m, "w7", 20);
  REQUIRE(near.size() == 19);

  auto cosine = [&](uint32_t x, uint32_t y) {
    double d = 0, nx = 0, ny = 0;
    for (size_t j = 0; j < m.dim; ++j) {
      double a = m.input_vectors[x * m.dim + j], b = m.input_vectors[y * m.dim + j];
      d += a * b;
      nx += a * a;
      ny += b * b;
    }
    return d / std::sqrt(nx * ny);
  };
  uint32_t self = *m.row_of("w7");
  double prev = 2.0;
  for (const auto& n : near) {
    CHECK(n.similarity == doctest::Approx(cosine(self, *m.row_of(n.term))).epsilon(1e-12));
    CHECK(n.similarity <= prev + 1e-12);
    prev = n.similarity;
  }
}

TEST_CASE("stem fallback maps surface forms onto embedding rows") {
  EmbeddingMatrix m;
  m.vocab = {"dollar", "tax"};
  m.dim = 2;
  m.input_vectors = {1, 0, 0, 1};
  m.rebuild_lookup();

  StemResolver resolver(m, Stemmer::standard());
  CHECK(*resolver.resolve("dollar") == 0);
  CHECK(*resolver.resolve("dollars") == 0);
  CHECK(*resolver.resolve("taxes") == 1);
  CHECK(resolver.resolve("zebra") == std::nullopt);

  CHECK(*lookup_with_stem_fallback(m, "dollars", Stemmer::standard()) == 0);
}
