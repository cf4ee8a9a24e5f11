#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "alstp/metrics.hpp"
#include "toy.hpp"

using namespace alstp;
using namespace alstp::eval;

namespace {

// Student-t two-sided p-value by composite Simpson integration of the density.
double t_pvalue_oracle(double t, double dof) {
  const double c = std::exp(std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2)) / std::sqrt(dof * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / dof, -(dof + 1) / 2); };
  const double a = 0, b = std::abs(t);
  const int n = 200000;
  const double h = (b - a) / n;
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4 : 2);
  const double half = s * h / 3;  // P(0 < T < |t|)
  return 1 - 2 * half;
}

}  // namespace

TEST_CASE("metric examples") {
  CHECK(hit_ratio(1) == 1.0);
  CHECK(reciprocal_rank(1) == 1.0);
  CHECK(ndcg_single(1) == 1.0);
  CHECK(ndcg_single(3) == 0.5);
  CHECK(reciprocal_rank(4) == 0.25);
  CHECK(hit_ratio(20) == 1.0);
  CHECK(hit_ratio(21) == 0.0);
  CHECK(reciprocal_rank(21) == 0.0);
  CHECK(ndcg_single(21) == 0.0);
  CHECK(hit_ratio(5, 4) == 0.0);
  for (std::size_t r = 1; r < 40; ++r) {
    CHECK(hit_ratio(r) >= reciprocal_rank(r));
    CHECK(reciprocal_rank(r) >= 0.0);
    CHECK(ndcg_single(r) <= hit_ratio(r));
  }
  const std::vector<std::size_t> ranks{1, 3, 30};
  auto m = aggregate(ranks);
  CHECK(m.instances == 3);
  CHECK(m.hr == doctest::Approx(2.0 / 3));
  CHECK(m.mrr == doctest::Approx((1 + 1.0 / 3) / 3));
  CHECK(m.ndcg == doctest::Approx(0.5));
}

TEST_CASE("metrics from ranked lists equal a linear-scan oracle") {
  std::mt19937_64 rng(99);
  double hr = 0, mrr = 0, ndcg = 0;
  std::vector<std::size_t> ranks;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<double> scores(n);
    for (auto& s : scores) s = static_cast<double>(rng() % 7);  // plenty of ties
    const auto target = static_cast<std::uint32_t>(rng() % n);
    const auto list = model::rank_scores(scores);
    const std::size_t r = rank_of(list, target);
    ranks.push_back(r);

    // Oracle: count products ahead of the target under (score desc, id asc).
    std::size_t ahead = 0;
    for (std::uint32_t p = 0; p < n; ++p) {
      if (scores[p] > scores[target] || (scores[p] == scores[target] && p < target)) ++ahead;
    }
    CHECK(r == ahead + 1);
    const double o_hr = ahead + 1 <= 20 ? 1.0 : 0.0;
    const double o_rr = ahead + 1 <= 20 ? 1.0 / static_cast<double>(ahead + 1) : 0.0;
    const double o_ndcg = ahead + 1 <= 20 ? 1.0 / std::log2(static_cast<double>(ahead + 2)) : 0.0;
    CHECK(hit_ratio(r) == o_hr);
    CHECK(reciprocal_rank(r) == o_rr);
    CHECK(ndcg_single(r) == o_ndcg);
    hr += o_hr;
    mrr += o_rr;
    ndcg += o_ndcg;
  }
  auto m = aggregate(ranks);
  CHECK(m.hr == hr / 1000);
  CHECK(m.mrr == mrr / 1000);
  CHECK(m.ndcg == ndcg / 1000);
  CHECK_THROWS_AS(rank_of(model::rank_scores(std::vector<double>{1.0}), 5), Error);
}

TEST_CASE("paired t-test") {
  const std::vector<double> a{0.125, 0.5, 0.25, 1.0, 0.75};  // exact in binary
  auto same = paired_ttest(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  CHECK(same.degenerate);

  std::vector<double> shifted(a);
  for (auto& v : shifted) v += 0.25;
  auto shift = paired_ttest(shifted, a);
  CHECK(shift.degenerate);
  CHECK(shift.p == 0.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0, 0.1);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = noise(rng);
    y[i] = x[i] + 0.1 + noise(rng);
  }
  auto big = paired_ttest(y, x);
  CHECK(big.p < 1e-10);
  CHECK(big.t > 0);

  // n = 5 fixture against numerical integration of the t density.
  const std::vector<double> A{0.82, 0.41, 0.67, 0.93, 0.55}, B{0.71, 0.44, 0.52, 0.80, 0.49};
  auto r = paired_ttest(A, B);
  std::vector<double> d(5);
  for (int i = 0; i < 5; ++i) d[i] = A[i] - B[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / 5;
  double ss = 0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double t = mean / std::sqrt(ss / 4 / 5);
  CHECK(r.t == doctest::Approx(t).epsilon(1e-12));
  CHECK(r.n == 5);
  CHECK(std::abs(r.p - t_pvalue_oracle(t, 4)) < 1e-4);
  // symmetric in the order of arguments
  CHECK(paired_ttest(B, A).p == doctest::Approx(r.p).epsilon(1e-12));

  CHECK_THROWS_AS(paired_ttest(A, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(paired_ttest(std::vector<double>{1}, std::vector<double>{2}), Error);
}

TEST_CASE("evaluation is thread-count invariant and per-instance consistent") {
  const auto data = toy::toy_dataset(7, 14);
  auto cfg = toy::toy_train_config();
  const auto model = model::Model<float>::init(cfg);
  auto one = evaluate(model, data, Split::Test, 1);
  auto four = evaluate(model, data, Split::Test, 4);
  REQUIRE(one.instances.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(one.instances[i].rank == four.instances[i].rank);
    CHECK(one.instances[i].target == data.users[i].test);
  }
  CHECK(one.metrics.ndcg == four.metrics.ndcg);
  const auto nd = one.per_instance("ndcg");
  CHECK(std::accumulate(nd.begin(), nd.end(), 0.0) / nd.size() == doctest::Approx(one.metrics.ndcg));
  CHECK_THROWS_AS(one.per_instance("map"), Error);
  auto v = evaluate(model, data, Split::Validation);
  CHECK(v.instances[0].target == data.users[0].valid);
}

TEST_CASE("attention dump replays the forward pass") {
  auto data = toy::toy_dataset(3, 14);
  auto cfg = toy::toy_train_config();
  cfg.m = 4;
  const auto model = model::Model<float>::init(cfg);
  for (std::size_t u = 0; u < data.users.size(); ++u) {
    auto rec = dump_attention(model, data, u, Split::Test);
    REQUIRE(rec.short_weights.size() == 4);
    REQUIRE(rec.long_weights.size() == cfg.k);
    CHECK(std::accumulate(rec.short_weights.begin(), rec.short_weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rec.previous_products.size() == 4);

    // Replay: bit-equal weights.
    const auto& seq = data.users[u];
    auto state = model.initial_state();
    model.advance(state, data.inputs, seq.history, seq.test);
    nn::Tape<float> tape(false);
    auto tr = model.intent(tape, data.inputs, seq.history, seq.test, state.g);
    for (std::size_t j = 0; j < 4; ++j) CHECK(rec.short_weights[j] == tr.short_term.weights[j]);
    for (std::size_t j = 0; j < cfg.k; ++j) CHECK(rec.long_weights[j] == tr.long_term.weights[j]);
  }

  // Identical previous queries -> uniform weights.
  for (auto& q : data.users[0].history.queries) q = 1;
  auto rec = dump_attention(model, data, 0, Split::Test);
  for (float w : rec.short_weights) CHECK(w == doctest::Approx(0.25f));

  // WoPM has nothing to attend.
  cfg.variant = Variant::WoPM;
  auto plain = dump_attention(model::Model<float>::init(cfg), data, 0, Split::Test);
  CHECK(plain.short_weights.empty());
  CHECK(plain.long_weights.empty());
}
