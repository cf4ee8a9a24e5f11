#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "alstp/baselines.hpp"
#include "alstp/synth.hpp"

using namespace alstp;
using namespace alstp::baselines;

namespace {

using Doc = std::vector<std::string>;

Doc words(std::initializer_list<const char*> ws) { return Doc(ws.begin(), ws.end()); }

std::vector<Doc> random_collection(std::mt19937_64& rng, std::size_t docs, std::size_t len, std::size_t vocab) {
  std::vector<Doc> out(docs);
  for (auto& d : out)
    for (std::size_t i = 0; i < len; ++i) d.push_back("w" + std::to_string(rng() % vocab));
  return out;
}

corpus::Corpus synth_corpus(std::uint64_t seed, std::size_t users = 30) {
  synth::SynthOptions o;
  o.users = users;
  o.purchases = 12;
  o.seed = seed;
  auto s = synth::generate(o);
  corpus::CorpusOptions co;
  co.min_word_freq = 1;
  return corpus::build_corpus(s.reviews, s.meta, co);
}

}  // namespace

TEST_CASE("ql score: smoothing term and collection model") {
  LanguageModelIndex idx({words({"a", "b", "a"}), words({"c", "c", "b", "d"})});
  CHECK(idx.num_documents() == 2);
  CHECK(idx.doc_length(1) == 4);
  CHECK(idx.term_frequency("a", 0) == 2);
  CHECK(idx.term_frequency("a", 1) == 0);
  CHECK(idx.collection_probability("c") == doctest::Approx(2.0 / 7));
  CHECK(idx.collection_probability("zzz") == 0.0);
  CHECK(std::abs(idx.collection_mass() - 1.0) < 1e-9);

  const double mu = 2000;
  // "a" is absent from document 1: only the smoothing term contributes.
  CHECK(idx.ql_score(words({"a"}), 1, mu) == doctest::Approx(std::log(mu * (2.0 / 7) / (4 + mu))).epsilon(1e-14));
  CHECK(idx.ql_score(words({"a", "c"}), 1, mu) ==
        doctest::Approx(std::log(mu * (2.0 / 7) / (4 + mu)) + std::log((2 + mu * (2.0 / 7)) / (4 + mu))).epsilon(1e-14));
  // Out-of-collection words are skipped.
  CHECK(idx.ql_score(words({"a", "zzz"}), 1, mu) == idx.ql_score(words({"a"}), 1, mu));
  CHECK_THROWS_AS(idx.ql_score(words({"a"}), 0, 0.0), Error);

  // Empty document: the smoothing term only.
  LanguageModelIndex with_empty({words({"a", "b"}), Doc{}});
  CHECK(with_empty.ql_score(words({"a"}), 1, 10.0) == doctest::Approx(std::log(10.0 * 0.5 / 10.0)));
}

TEST_CASE("collection mass sums to one") {
  std::mt19937_64 rng(3);
  for (int c = 0; c < 20; ++c) {
    LanguageModelIndex idx(random_collection(rng, 1 + rng() % 10, 1 + rng() % 50, 1 + rng() % 30));
    CHECK(std::abs(idx.collection_mass() - 1.0) < 1e-9);
  }
}

TEST_CASE("single-document collection: brute force over the query space") {
  // With one document P(w|C) = tf/|D| and each query term scores log(tf/|D|), so the
  // best query of a given length repeats the most frequent word; a document with a
  // flat term distribution is itself among the best queries of its length.
  for (const auto& doc : {words({"a", "b", "c", "d"}), words({"a", "a", "b", "c"})}) {
    LanguageModelIndex idx({doc});
    // The query space is the collection's own words (anything else is skipped).
    std::vector<std::string> vocab(doc.begin(), doc.end());
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    double best = -INFINITY;
    Doc q(doc.size());
    std::size_t space = 1;
    for (std::size_t i = 0; i < doc.size(); ++i) space *= vocab.size();
    for (std::size_t code = 0; code < space; ++code) {
      std::size_t c = code;
      for (auto& w : q) {
        w = vocab[c % vocab.size()];
        c /= vocab.size();
      }
      best = std::max(best, idx.ql_score(q, 0, 2000));
    }
    std::size_t top = 0;
    for (const auto& w : vocab) top = std::max<std::size_t>(top, idx.term_frequency(w, 0));
    const double analytic = static_cast<double>(doc.size()) * std::log(static_cast<double>(top) / doc.size());
    CHECK(best == doctest::Approx(analytic).epsilon(1e-12));
    if (vocab.size() == doc.size()) CHECK(idx.ql_score(doc, 0, 2000) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("ql is monotone in term frequency") {
  std::mt19937_64 rng(7);
  for (int c = 0; c < 200; ++c) {
    auto docs = random_collection(rng, 6, 12, 5);
    LanguageModelIndex idx(docs);
    const std::string w = "w" + std::to_string(rng() % 5);
    for (std::size_t a = 0; a < docs.size(); ++a)
      for (std::size_t b = 0; b < docs.size(); ++b)
        if (idx.term_frequency(w, a) >= idx.term_frequency(w, b) && idx.collection_probability(w) > 0)
          CHECK(idx.ql_score({w}, a, 2000) >= idx.ql_score({w}, b, 2000));
  }
}

TEST_CASE("mu grid runs and moves scores") {
  LanguageModelIndex idx({words({"a", "b", "a"}), words({"c", "c", "b", "d"})});
  double prev = 0;
  for (double mu : {2000.0, 6000.0, 10000.0}) {
    const double s = idx.ql_score(words({"a", "b"}), 0, mu);
    CHECK(std::isfinite(s));
    if (mu > 2000.0) CHECK(s != prev);
    prev = s;
  }
}

TEST_CASE("uql: reduction to ql, affinity and profile-only limit") {
  std::mt19937_64 rng(11);
  auto docs = random_collection(rng, 8, 30, 12);
  LanguageModelIndex idx(docs);
  const Doc profile{"w1", "w3", "w7"};
  const Doc query{"w2", "w5", "w1"};
  for (std::size_t d = 0; d < docs.size(); ++d) {
    CHECK(uql_score(idx, profile, query, d, 2000, 1.0) == idx.ql_score(query, d, 2000));
    const double a = idx.ql_score(query, d, 2000), b = idx.ql_score(profile, d, 2000);
    for (double lambda : {0.2, 0.5, 0.8}) {
      CHECK(std::abs(uql_score(idx, profile, query, d, 2000, lambda) - (lambda * a + (1 - lambda) * b)) < 1e-9);
    }
    Doc reversed(query.rbegin(), query.rend());
    CHECK(uql_score(idx, profile, query, d, 2000, 0.0) == uql_score(idx, profile, Doc{"w9"}, d, 2000, 0.0));
    CHECK(uql_score(idx, profile, reversed, d, 2000, 0.0) == uql_score(idx, profile, query, d, 2000, 0.0));
    // Empty profile falls back to QL.
    CHECK(uql_score(idx, {}, query, d, 2000, 0.3) == idx.ql_score(query, d, 2000));
  }
  CHECK_THROWS_AS(uql_score(idx, profile, query, 0, 2000, 1.2), Error);
  CHECK_THROWS_AS(uql_score(idx, profile, query, 0, 2000, -0.1), Error);
}

TEST_CASE("user word profiles use training reviews only") {
  auto c = synth_corpus(5, 10);
  auto profiles = user_word_profiles(c, 3);
  REQUIRE(profiles.size() == c.users.size());
  for (std::size_t u = 0; u < c.users.size(); ++u) {
    const auto& s = c.splits[u];
    std::map<std::string, std::size_t> counts;
    for (std::size_t j = s.begin; j < s.valid; ++j)
      for (const auto& w : c.review_tokens[j]) ++counts[w];
    std::vector<std::string> expect;
    for (const auto& [w, n] : counts)
      if (n > 3) expect.push_back(w);
    CHECK(profiles[u] == expect);
  }
  CHECK(user_word_profiles(c, 1000)[0].empty());
}

TEST_CASE("baseline ranking matches a brute-force scorer and UQL(1) equals QL") {
  const auto c = synth_corpus(9);
  LanguageModelIndex idx(c.product_documents());
  BaselineConfig cfg;
  const auto ql = evaluate_ql(c, idx, eval::Split::Test, cfg);
  REQUIRE(ql.instances.size() == c.users.size());
  for (std::size_t u = 0; u < c.users.size(); ++u) {
    const auto& it = c.interactions[c.splits[u].test];
    const auto q = c.query_tokens(it.query);
    const double own = idx.ql_score(q, it.product, cfg.mu);
    std::size_t rank = 1;
    for (std::size_t d = 0; d < idx.num_documents(); ++d) {
      const double s = idx.ql_score(q, d, cfg.mu);
      if (s > own || (s == own && d < it.product)) ++rank;
    }
    CHECK(ql.instances[u].rank == rank);
  }

  const auto profiles = user_word_profiles(c, 5);
  cfg.lambda = 1.0;
  const auto uql = evaluate_uql(c, idx, profiles, eval::Split::Test, cfg);
  for (std::size_t i = 0; i < ql.instances.size(); ++i) CHECK(uql.instances[i].rank == ql.instances[i].rank);
  CHECK(uql.metrics.ndcg == ql.metrics.ndcg);
}
