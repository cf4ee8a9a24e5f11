#include <doctest.h>

#include <cmath>
#include <random>

#include "alstp/gradcheck.hpp"
#include "toy.hpp"

using namespace alstp;
using namespace alstp::nn;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("matvec examples and shape errors") {
  Tape<float> tape;
  auto I = Tensor<float>::matrix(2, 2, {1, 0, 0, 1});
  auto x = Tensor<float>::vector(std::vector<float>{3, -1});
  auto y = matvec(tape, I, x);
  CHECK(y[0] == 3.0f);
  CHECK(y[1] == -1.0f);
  auto z = matvec(tape, Tensor<float>::zeros({2, 2}), x);
  CHECK(z[0] == 0.0f);
  CHECK(z[1] == 0.0f);
  auto W = Tensor<float>::matrix(2, 2, {1, 2, 3, 4});
  auto ones = Tensor<float>::vector(std::vector<float>{1, 1});
  auto w = matvec(tape, W, ones);
  // scalar-loop oracle
  for (std::size_t i = 0; i < 2; ++i) {
    float acc = 0;
    for (std::size_t j = 0; j < 2; ++j) acc += W.values()[i * 2 + j] * ones[j];
    CHECK(w[i] == acc);
  }
  CHECK(w[0] == 3.0f);
  CHECK(w[1] == 7.0f);
  auto bad = Tensor<float>::vector(std::vector<float>{1, 2, 3});
  try {
    matvec(tape, W, bad);
    FAIL("expected shape error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("elu values") {
  Tape<double> tape;
  auto y = elu(tape, Tensor<double>::vector(std::vector<double>{0.0, 2.0, -1.0}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("softmax values, normalisation and shift invariance") {
  Tape<double> tape;
  auto u = softmax(tape, Tensor<double>::vector(std::vector<double>{0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0));
  CHECK(softmax(tape, Tensor<double>::vector(std::vector<double>{123.4}))[0] == 1.0);
  auto s = softmax(tape, Tensor<double>::vector(std::vector<double>{1, 2}));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(s[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.2689).epsilon(1e-4));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<float> t;
    auto xs = randn(7, rng, 3.0);
    std::vector<float> x(xs.begin(), xs.end()), shifted(x);
    for (auto& v : shifted) v += 17.5f;
    auto a = softmax(t, Tensor<float>::vector(x));
    auto b = softmax(t, Tensor<float>::vector(shifted));
    double total = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(a[i] >= 0.0f);
      CHECK(std::abs(a[i] - b[i]) < 1e-6);
      total += a[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(softmax(tape, Tensor<double>()), Error);
}

TEST_CASE("cosine examples, scale invariance and zero-vector error") {
  Tape<double> tape;
  auto v = Tensor<double>::vector(std::vector<double>{0.3, -2.0, 1.5});
  auto neg = Tensor<double>::vector(std::vector<double>{-0.3, 2.0, -1.5});
  CHECK(cosine(tape, v, v).item() == doctest::Approx(1.0));
  CHECK(cosine(tape, v, neg).item() == doctest::Approx(-1.0));
  CHECK(cosine(tape, Tensor<double>::vector(std::vector<double>{1, 0}), Tensor<double>::vector(std::vector<double>{0, 1}))
            .item() == 0.0);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    Tape<float> t;
    auto a = randn(6, rng), b = randn(6, rng);
    std::vector<float> af(a.begin(), a.end()), bf(b.begin(), b.end()), a2(af), b3(bf);
    for (auto& x : a2) x *= 2;
    for (auto& x : b3) x *= 3;
    const float c1 = cosine(t, Tensor<float>::vector(af), Tensor<float>::vector(bf)).item();
    const float c2 = cosine(t, Tensor<float>::vector(a2), Tensor<float>::vector(b3)).item();
    CHECK(std::abs(c1 - c2) < 1e-6);
    CHECK(c1 <= 1.0f);
    CHECK(c1 >= -1.0f);
  }
  CHECK_THROWS_AS(cosine(tape, v, Tensor<double>::zeros({3})), Error);
}

TEST_CASE("backward: linear sum, double backward, non-participating tensors") {
  auto x = Tensor<float>::vector(std::vector<float>{1, 2, 3});
  x.set_requires_grad();
  auto unused = Tensor<float>::vector(std::vector<float>{4, 5});
  unused.set_requires_grad();
  x.zero_grad();
  unused.zero_grad();
  Tape<float> tape;
  auto loss = sum(tape, x);
  tape.backward(loss);
  for (auto g : x.grad()) CHECK(g == 1.0f);
  for (auto g : unused.grad()) CHECK(g == 0.0f);
  CHECK_THROWS_AS(tape.backward(loss), Error);
  tape.reset();
}

TEST_CASE("grad_check: x^2, softmax-dot, cosine") {
  auto x = Tensor<double>::scalar(3.0);
  const double e1 = grad_check<double>([&](Tape<double>& t) { return mul(t, x, x); }, {x});
  CHECK(e1 < 1e-6);
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  std::mt19937_64 rng(3);
  for (int seed = 0; seed < 20; ++seed) {
    auto a = Tensor<double>::vector(randn(5, rng));
    auto w = Tensor<double>::vector(randn(5, rng));
    const double e2 =
        grad_check<double>([&](Tape<double>& t) { return dot(t, softmax(t, a), w); }, {a, w});
    CHECK(e2 < 1e-4);

    auto y = Tensor<double>::vector(randn(5, rng));
    auto c = Tensor<double>::vector(randn(5, rng));
    const double e3 = grad_check<double>([&](Tape<double>& t) { return cosine(t, c, y); }, {c});
    CHECK(e3 < 1e-3);
  }
  CHECK_THROWS_AS(grad_check<double>([&](Tape<double>& t) { return mul(t, x, x); }, {x}, {0.0, 0, 0}), Error);
}

TEST_CASE("grad_check: every primitive below 1e-4") {
  std::mt19937_64 rng(11);
  for (int seed = 0; seed < 20; ++seed) {
    auto a = Tensor<double>::vector(randn(4, rng));
    auto b = Tensor<double>::vector(randn(4, rng));
    auto W = Tensor<double>::matrix(3, 4, randn(12, rng));
    auto s = Tensor<double>::scalar(randn(1, rng)[0]);
    auto w3 = Tensor<double>::vector(randn(3, rng));
    auto w8 = Tensor<double>::vector(randn(8, rng));
    auto w4 = Tensor<double>::vector(randn(4, rng));
    using F = std::function<Tensor<double>(Tape<double>&)>;
    std::vector<std::pair<const char*, F>> cases = {
        {"matvec", [&](Tape<double>& t) { return dot(t, matvec(t, W, a), w3); }},
        {"add", [&](Tape<double>& t) { return dot(t, add(t, a, b), w4); }},
        {"sub", [&](Tape<double>& t) { return dot(t, sub(t, a, b), w4); }},
        {"mul", [&](Tape<double>& t) { return dot(t, mul(t, a, b), w4); }},
        {"scale", [&](Tape<double>& t) { return dot(t, scale(t, a, s), w4); }},
        {"add_scalar", [&](Tape<double>& t) { return dot(t, add_scalar(t, a, s), w4); }},
        {"elu", [&](Tape<double>& t) { return dot(t, elu(t, a), w4); }},
        {"sigmoid", [&](Tape<double>& t) { return dot(t, sigmoid(t, a), w4); }},
        {"tanh", [&](Tape<double>& t) { return dot(t, nn::tanh(t, a), w4); }},
        {"log_sigmoid", [&](Tape<double>& t) { return log_sigmoid(t, dot(t, a, b)); }},
        {"concat", [&](Tape<double>& t) {
           std::vector<Tensor<double>> parts{a, b};
           return dot(t, concat(t, std::span<const Tensor<double>>(parts)), w8);
         }},
        {"softmax", [&](Tape<double>& t) { return dot(t, softmax(t, a), w4); }},
        {"sum", [&](Tape<double>& t) { return sum(t, mul(t, a, a)); }},
        {"sq_norm", [&](Tape<double>& t) { return sq_norm(t, a); }},
        {"cosine", [&](Tape<double>& t) { return cosine(t, a, b); }},
        {"weighted_sum", [&](Tape<double>& t) {
           std::vector<Tensor<double>> logits{s, Tensor<double>::scalar(0.3)};
           auto alpha = concat(t, std::span<const Tensor<double>>(logits));
           std::vector<Tensor<double>> hs{a, b};
           return dot(t, weighted_sum(t, softmax(t, alpha), std::span<const Tensor<double>>(hs)), w4);
         }},
    };
    for (auto& [label, f] : cases) {
      const std::string name = label;
      CAPTURE(name);
      CAPTURE(seed);
      CHECK(grad_check<double>(f, {a, b, W, s}) < 1e-4);
    }
  }
}

TEST_CASE("GRU with zero weights halves the state") {
  auto cfg = toy::small_config();
  auto p = model::Params<float>::zeros(cfg);
  Tape<float> tape;
  auto h = Tensor<float>::vector(std::vector<float>{0.8f, -1.2f, 3.0f, 0.1f});
  auto x = Tensor<float>::vector(std::vector<float>{1, 2, 3, 4});
  auto out = model::gru_step(tape, p, x, h);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(out[i] - 0.5f * h[i]) <= 1e-7);
}

TEST_CASE("grad_check: single GRU step, all parameters") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = toy::small_config();
    auto p = toy::random_params<double>(cfg, seed);
    std::mt19937_64 rng(seed + 100);
    auto x = Tensor<double>::vector(randn(4, rng));
    auto h = Tensor<double>::vector(randn(4, rng));
    auto w = Tensor<double>::vector(randn(4, rng));
    const double err = grad_check<double>(
        [&](Tape<double>& t) { return dot(t, model::gru_step(t, p, x, h), w); },
        {p.gru_wz, p.gru_uz, p.gru_w, p.gru_u, p.gru_wr, p.gru_ur, x, h});
    CHECK(err < 1e-3);
  }
}

TEST_CASE("end-to-end BPR loss gradient, every variant, 20 seeds") {
  for (auto v : kAllVariants) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(variant_name(v));
      CAPTURE(seed);
      auto cfg = toy::small_config(v, seed);
      cfg.l2 = 0.01;
      model::Model<double> m(cfg, toy::random_params<double>(cfg, seed));
      auto inputs = toy::random_inputs<double>(cfg.k, 5, 8, seed + 7);
      auto hist = toy::random_history(7, 5, 8, seed + 13);
      const std::size_t target = 5;
      auto state = m.initial_state();
      m.advance(state, inputs, hist, target);
      const auto pos = hist.products[target];
      const std::uint32_t neg = (pos + 1) % 8;
      auto loss = [&](Tape<double>& t) {
        auto tr = m.intent(t, inputs, hist, target, state.g);
        auto sp = m.score(t, tr, inputs.product(pos));
        auto sn = m.score(t, tr, inputs.product(neg));
        return train::bpr_loss(t, sp, sn, cfg.l2, m.params());
      };
      std::vector<Tensor<double>> params;
      for (auto& [name, t] : m.params().named()) params.push_back(t);
      CHECK(grad_check<double>(loss, params) < 1e-2);
    }
  }
}
