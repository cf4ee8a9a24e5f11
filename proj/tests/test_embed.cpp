#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "alstp/pvdm.hpp"
#include "alstp/tensor.hpp"
#include "alstp/text.hpp"
#include "tmpdir.hpp"

using namespace alstp;
using namespace alstp::embed;

namespace {

double cosine(std::span<const float> a, std::span<const float> b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return d / std::sqrt(na * nb);
}

Vocabulary letters(std::size_t n, std::uint64_t count = 10) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocabulary(w, std::vector<std::uint64_t>(n, count));
}

std::vector<std::uint32_t> random_tokens(std::size_t n, std::uint32_t lo, std::uint32_t hi, std::mt19937_64& rng) {
  std::vector<std::uint32_t> out(n);
  for (auto& t : out) t = lo + static_cast<std::uint32_t>(rng() % (hi - lo));
  return out;
}

PvdmConfig small(std::uint64_t seed, std::size_t epochs = 30) {
  PvdmConfig c;
  c.dim = 8;
  c.window = 2;
  c.epochs = epochs;
  c.seed = seed;
  c.infer_epochs = 50;
  return c;
}

}  // namespace

TEST_CASE("vocabulary") {
  Vocabulary v({"x", "y"}, {3, 4});
  CHECK(v.size() == 2);
  CHECK(*v.find("y") == 1);
  CHECK_FALSE(v.find("z"));
  CHECK(v.encode({"y", "z", "x"}) == std::vector<std::uint32_t>{1, 0});
  CHECK_THROWS_AS(Vocabulary({"x", "x"}, {1, 1}), Error);
  CHECK_THROWS_AS(Vocabulary({"x"}, {1, 1}), Error);
}

TEST_CASE("negative sampler follows unigram^0.75") {
  const std::vector<std::uint64_t> counts{1, 5, 20, 100, 3, 50};
  NegativeSampler s(counts);
  double z = 0;
  for (auto c : counts) z += std::pow(static_cast<double>(c), 0.75);
  Rng rng(7);
  std::vector<std::size_t> hits(counts.size(), 0);
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) ++hits[s.sample(rng)];
  for (std::size_t w = 0; w < counts.size(); ++w) {
    const double p = std::pow(static_cast<double>(counts[w]), 0.75) / z;
    CHECK(s.probability(static_cast<std::uint32_t>(w)) == doctest::Approx(p).epsilon(1e-12));
    const double observed = static_cast<double>(hits[w]) / draws;
    CHECK(std::abs(observed - p) / p < 0.05);
  }
}

TEST_CASE("zero epochs returns the initialization") {
  std::vector<Document> docs{{DocKind::Product, "p", {0, 1, 0, 1}}, {DocKind::Query, "a b", {0, 1}}};
  auto cfg = small(3, 0);
  auto init = init_pvdm(docs, letters(2), cfg);
  auto trained = train_pvdm(docs, letters(2), cfg);
  CHECK(trained.doc_vectors == init.doc_vectors);
  CHECK(trained.word_vectors == init.word_vectors);
  CHECK(trained.checksum() == init.checksum());
}

TEST_CASE("loss decreases on a tiny document") {
  std::vector<Document> docs{{DocKind::Product, "p", {0, 1, 0, 1}}};
  PvdmConfig cfg;
  cfg.dim = 4;
  cfg.window = 1;
  cfg.epochs = 200;
  cfg.negatives = 1;
  PvdmLog log;
  train_pvdm(docs, letters(2), cfg, &log);
  REQUIRE(log.epoch_loss.size() == 200);
  // Per-prediction losses are noisy; compare averaged early and late epochs.
  auto mean = [&](std::size_t lo, std::size_t hi) {
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += log.epoch_loss[i];
    return s / static_cast<double>(hi - lo);
  };
  CHECK(mean(190, 200) < mean(0, 10));
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("identical documents end closer than disjoint ones") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto shared = random_tokens(60, 0, 4, rng);
    std::vector<Document> docs{{DocKind::Product, "d1", shared},
                               {DocKind::Product, "d2", shared},
                               {DocKind::Product, "d3", random_tokens(60, 4, 8, rng)}};
    auto t = train_pvdm(docs, letters(8), small(seed, 40));
    if (cosine(t.doc(0), t.doc(1)) > cosine(t.doc(0), t.doc(2))) ++wins;
    for (std::size_t d = 0; d < t.num_docs(); ++d) {
      double n = 0;
      for (float v : t.doc(d)) {
        CHECK(std::isfinite(v));
        n += v * v;
      }
      CHECK(n > 0.0);
    }
  }
  CHECK(wins >= 18);
}

TEST_CASE("query inference") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    // Words a-d and e-h form two topics; products mix within a topic.
    std::vector<Document> docs;
    for (int p = 0; p < 6; ++p) {
      const std::uint32_t base = p % 2 ? 4 : 0;
      docs.push_back({DocKind::Product, "p" + std::to_string(p), random_tokens(40, base, base + 4, rng)});
    }
    docs.push_back({DocKind::Query, "a b c", {0, 1, 2}});
    docs.push_back({DocKind::Query, "e f g", {4, 5, 6}});
    // Three-word documents need many passes before the two queries separate.
    auto t = train_pvdm(docs, letters(8), small(seed, 200));
    const auto before = t.checksum();

    // Seen query: the stored row, bit for bit.
    auto seen = infer_query_vector(t, "a b c", 50);
    const auto row = *t.find_doc(DocKind::Query, "a b c");
    CHECK(std::equal(seen.begin(), seen.end(), t.doc(row).begin()));

    auto unseen = infer_query_vector(t, "c b a", 50);
    CHECK(infer_query_vector(t, "c b a", 50) == unseen);
    CHECK(t.checksum() == before);
    const auto other = *t.find_doc(DocKind::Query, "e f g");
    if (cosine(unseen, t.doc(row)) > cosine(unseen, t.doc(other))) ++wins;

    CHECK_THROWS_AS(infer_query_vector(t, "zzz qqq", 50), Error);
  }
  CHECK(wins >= 18);
}

TEST_CASE("short documents train with a truncated context") {
  std::vector<Document> docs{{DocKind::Product, "one", {0}}, {DocKind::Product, "two", {1, 0}}};
  auto t = train_pvdm(docs, letters(2), small(1, 5));
  for (float v : t.doc_vectors) CHECK(std::isfinite(v));
  std::vector<Document> empty{{DocKind::Product, "none", {}}};
  CHECK_THROWS_AS(train_pvdm(empty, letters(2), small(1)), Error);
}

TEST_CASE("training is deterministic and round-trips through disk") {
  std::mt19937_64 rng(5);
  std::vector<Document> docs{{DocKind::Product, "p0", random_tokens(30, 0, 5, rng)},
                             {DocKind::Query, "a b", {0, 1}}};
  auto a = train_pvdm(docs, letters(5), small(9, 10));
  auto b = train_pvdm(docs, letters(5), small(9, 10));
  CHECK(a.checksum() == b.checksum());
  auto c = train_pvdm(docs, letters(5), small(10, 10));
  CHECK(a.checksum() != c.checksum());

  test::TempDir dir;
  a.save(dir.path());
  auto back = EmbeddingTable::load(dir.path());
  CHECK(back.checksum() == a.checksum());
  CHECK(back.doc_keys == a.doc_keys);
  CHECK(back.dim() == a.dim());
  CHECK(back.config.window == a.config.window);
  CHECK(infer_query_vector(back, "b a", 20) == infer_query_vector(a, "b a", 20));
}
