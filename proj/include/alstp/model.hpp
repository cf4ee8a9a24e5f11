#pragma once

// Attentive long- and short-term preference model.
//
// A query is scored against products after fusing it with two views of the
// user: a GRU summary of the last m purchases (attended by query similarity)
// and a slowly updated long-term vector g (attended factor by factor).
// Everything is templated on the scalar so gradient checks can run in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alstp/config.hpp"
#include "alstp/rng.hpp"
#include "alstp/tensor.hpp"

namespace alstp::model {

using nn::Tape;
using nn::Tensor;
using alstp::Config;

template <typename T>
struct Params {
  Tensor<T> proj_w, proj_b;              // shared query/product projection
  Tensor<T> query_proj_w, query_proj_b;  // only when the projection is unshared
  Tensor<T> gru_wz, gru_uz, gru_w, gru_u, gru_wr, gru_ur;
  Tensor<T> short_w_current, short_w_previous, short_b, short_v;
  Tensor<T> long_w, long_b;
  std::vector<Tensor<T>> tower_w, tower_b;

  // Visits (name, tensor) in a fixed order; undefined optional tensors are skipped.
  template <typename F>
  void for_each(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit_impl(*this, f);
  }

  std::vector<std::pair<std::string, Tensor<T>>> named() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for_each([&](const std::string& n, const Tensor<T>& t) { out.emplace_back(n, t); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
  }

  void zero_grad() {
    for_each([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
  }

  void set_trainable(bool on = true) {
    for_each([on](const std::string&, Tensor<T>& t) { t.set_requires_grad(on); });
  }

  Params clone() const { return cast<T>(); }

  template <typename U>
  Params<U> cast() const {
    Params<U> out;
    out.proj_w = proj_w.template cast<U>();
    out.proj_b = proj_b.template cast<U>();
    if (query_proj_w.defined()) {
      out.query_proj_w = query_proj_w.template cast<U>();
      out.query_proj_b = query_proj_b.template cast<U>();
    }
    out.gru_wz = gru_wz.template cast<U>();
    out.gru_uz = gru_uz.template cast<U>();
    out.gru_w = gru_w.template cast<U>();
    out.gru_u = gru_u.template cast<U>();
    out.gru_wr = gru_wr.template cast<U>();
    out.gru_ur = gru_ur.template cast<U>();
    out.short_w_current = short_w_current.template cast<U>();
    out.short_w_previous = short_w_previous.template cast<U>();
    out.short_b = short_b.template cast<U>();
    out.short_v = short_v.template cast<U>();
    out.long_w = long_w.template cast<U>();
    out.long_b = long_b.template cast<U>();
    for (const auto& t : tower_w) out.tower_w.push_back(t.template cast<U>());
    for (const auto& t : tower_b) out.tower_b.push_back(t.template cast<U>());
    return out;
  }

  // All-zero parameters with the shapes implied by `cfg`.
  static Params zeros(const Config& cfg) {
    const std::size_t k = cfg.k, f = cfg.attention_width();
    Params p;
    p.proj_w = Tensor<T>::zeros({k, k});
    p.proj_b = Tensor<T>::zeros({k});
    if (!cfg.share_projection) {
      p.query_proj_w = Tensor<T>::zeros({k, k});
      p.query_proj_b = Tensor<T>::zeros({k});
    }
    for (auto* t : {&p.gru_wz, &p.gru_uz, &p.gru_w, &p.gru_u, &p.gru_wr, &p.gru_ur}) *t = Tensor<T>::zeros({k, k});
    p.short_w_current = Tensor<T>::zeros({f, k});
    p.short_w_previous = Tensor<T>::zeros({f, k});
    p.short_b = Tensor<T>::zeros({f});
    p.short_v = Tensor<T>::zeros({f});
    p.long_w = Tensor<T>::zeros({k});
    p.long_b = Tensor<T>::zeros({1});
    const auto widths = cfg.tower_widths();
    for (std::size_t i = 1; i < widths.size(); ++i) {
      p.tower_w.push_back(Tensor<T>::zeros({widths[i], widths[i - 1]}));
      p.tower_b.push_back(Tensor<T>::zeros({widths[i]}));
    }
    p.set_trainable(true);
    return p;
  }

  // Xavier-uniform weights, zero biases. Vectors that act as one-row weight
  // matrices (short_v, long_w) use fan_in = length, fan_out = 1.
  static Params xavier(const Config& cfg, std::uint64_t seed) {
    Params p = zeros(cfg);
    Rng rng(derive_seed(seed, 0x58415649ull));
    auto fill = [&rng](Tensor<T>& t, std::size_t fan_in, std::size_t fan_out) {
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& v : t.mutable_values()) v = static_cast<T>(u(rng));
    };
    p.for_each([&](const std::string& name, Tensor<T>& t) {
      if (t.rank() == 2) {
        fill(t, t.cols(), t.rows());
      } else if (name == "short.v" || name == "long.w") {
        fill(t, t.size(), 1);
      }
    });
    return p;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("proj.w"), self.proj_w);
    f(std::string("proj.b"), self.proj_b);
    if (self.query_proj_w.defined()) {
      f(std::string("query_proj.w"), self.query_proj_w);
      f(std::string("query_proj.b"), self.query_proj_b);
    }
    f(std::string("gru.w_z"), self.gru_wz);
    f(std::string("gru.u_z"), self.gru_uz);
    f(std::string("gru.w"), self.gru_w);
    f(std::string("gru.u"), self.gru_u);
    f(std::string("gru.w_r"), self.gru_wr);
    f(std::string("gru.u_r"), self.gru_ur);
    f(std::string("short.w_current"), self.short_w_current);
    f(std::string("short.w_previous"), self.short_w_previous);
    f(std::string("short.b"), self.short_b);
    f(std::string("short.v"), self.short_v);
    f(std::string("long.w"), self.long_w);
    f(std::string("long.b"), self.long_b);
    for (std::size_t i = 0; i < self.tower_w.size(); ++i) {
      f("tower." + std::to_string(i) + ".w", self.tower_w[i]);
      f("tower." + std::to_string(i) + ".b", self.tower_b[i]);
    }
  }
};

// phi(W x + b) with ELU.
template <typename T>
Tensor<T> project(Tape<T>& tape, const Tensor<T>& W, const Tensor<T>& b, const Tensor<T>& x) {
  return nn::elu(tape, nn::add(tape, nn::matvec(tape, W, x), b));
}

// One GRU step (no biases):
//   z = sigmoid(W_z x + U_z h),  r = sigmoid(W_r x + U_r h)
//   cand = tanh(W x + U (r * h)),  h' = (1 - z) h + z cand
template <typename T>
Tensor<T> gru_step(Tape<T>& tape, const Params<T>& p, const Tensor<T>& x, const Tensor<T>& h) {
  using namespace nn;
  auto z = sigmoid(tape, add(tape, matvec(tape, p.gru_wz, x), matvec(tape, p.gru_uz, h)));
  auto r = sigmoid(tape, add(tape, matvec(tape, p.gru_wr, x), matvec(tape, p.gru_ur, h)));
  auto cand = nn::tanh(tape, add(tape, matvec(tape, p.gru_w, x), matvec(tape, p.gru_u, mul(tape, r, h))));
  // (1 - z) h + z cand == h + z (cand - h)
  return add(tape, h, mul(tape, z, sub(tape, cand, h)));
}

// GRU over the projected window, oldest first, starting from h0.
template <typename T>
std::vector<Tensor<T>> encode_short_term(Tape<T>& tape, const Params<T>& p, std::span<const Tensor<T>> products,
                                         const Tensor<T>& h0, std::size_t m) {
  if (products.size() != m) {
    throw Error("encode_short_term: window holds " + std::to_string(products.size()) + " products, expected " +
                std::to_string(m));
  }
  std::vector<Tensor<T>> hidden;
  hidden.reserve(m);
  Tensor<T> h = h0;
  for (const auto& x : products) {
    h = gru_step(tape, p, x, h);
    hidden.push_back(h);
  }
  return hidden;
}

template <typename T>
struct Attention {
  Tensor<T> weights;
  Tensor<T> context;
};

// a_j = v . elu(W_current q + W_previous q_j + b); alpha = softmax(a);
// context = sum_j alpha_j h_j. Scores come from queries, weights apply to
// hidden states. With `attentive` off the weights are uniform.
template <typename T>
Attention<T> short_term_attention(Tape<T>& tape, const Params<T>& p, const Tensor<T>& query,
                                  std::span<const Tensor<T>> previous_queries, std::span<const Tensor<T>> hidden,
                                  bool attentive = true) {
  using namespace nn;
  if (hidden.empty()) throw Error("short_term_attention: empty window");
  Tensor<T> alpha;
  if (attentive) {
    if (previous_queries.size() != hidden.size()) {
      throw Error("short_term_attention: " + std::to_string(previous_queries.size()) + " queries for " +
                  std::to_string(hidden.size()) + " hidden states");
    }
    auto current = add(tape, matvec(tape, p.short_w_current, query), p.short_b);
    std::vector<Tensor<T>> scores;
    scores.reserve(hidden.size());
    for (const auto& qj : previous_queries) {
      auto u = elu(tape, add(tape, current, matvec(tape, p.short_w_previous, qj)));
      scores.push_back(dot(tape, p.short_v, u));
    }
    alpha = softmax(tape, concat(tape, std::span<const Tensor<T>>(scores)));
  } else {
    alpha = Tensor<T>::vector(std::vector<T>(hidden.size(), T(1) / static_cast<T>(hidden.size())));
  }
  return {alpha, weighted_sum(tape, alpha, hidden)};
}

// a_j = g_j (w . q) + b; alpha = softmax(a); context = g * alpha.
// With `attentive` off the context is g itself and alpha is reported uniform.
template <typename T>
Attention<T> long_term_attention(Tape<T>& tape, const Params<T>& p, const Tensor<T>& g, const Tensor<T>& query,
                                 bool attentive = true) {
  using namespace nn;
  if (!attentive) {
    return {Tensor<T>::vector(std::vector<T>(g.size(), T(1) / static_cast<T>(g.size()))), g};
  }
  auto relevance = dot(tape, p.long_w, query);
  auto scores = add_scalar(tape, scale(tape, g, relevance), p.long_b);
  auto alpha = softmax(tape, scores);
  return {alpha, mul(tape, g, alpha)};
}

// g <- (1 - beta) g + beta h'
template <typename T>
std::vector<T> update_long_term(std::span<const T> g, std::span<const T> h_final, double beta) {
  if (g.size() != h_final.size()) throw Error("update_long_term: size mismatch");
  std::vector<T> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i] = static_cast<T>((1.0 - beta) * g[i] + beta * h_final[i]);
  }
  return out;
}

// Fully connected ELU layers from the fused width down to k.
template <typename T>
Tensor<T> tower(Tape<T>& tape, const Params<T>& p, const Tensor<T>& fused) {
  Tensor<T> c = fused;
  for (std::size_t i = 0; i < p.tower_w.size(); ++i) c = project(tape, p.tower_w[i], p.tower_b[i], c);
  return c;
}

// Raw (pre-projection) query and product vectors, row-major.
template <typename T>
struct InputTable {
  std::size_t dim = 0;
  std::vector<T> queries;
  std::vector<T> products;

  std::size_t num_queries() const { return dim ? queries.size() / dim : 0; }
  std::size_t num_products() const { return dim ? products.size() / dim : 0; }
  std::span<const T> query(std::size_t i) const { return std::span<const T>(queries).subspan(i * dim, dim); }
  std::span<const T> product(std::size_t i) const { return std::span<const T>(products).subspan(i * dim, dim); }

  template <typename U>
  InputTable<U> cast() const {
    return {dim, std::vector<U>(queries.begin(), queries.end()), std::vector<U>(products.begin(), products.end())};
  }
};

// One user's chronological (query, product) pairs as input-table rows.
struct History {
  std::vector<std::uint32_t> queries;
  std::vector<std::uint32_t> products;

  std::size_t size() const { return products.size(); }
};

template <typename T>
struct LongTermState {
  std::vector<T> g;
  std::size_t position = 0;  // last target whose preceding window updates are applied
  std::size_t window = 1;

  std::size_t pending() const { return position % window; }
};

template <typename T>
struct IntentTrace {
  Tensor<T> query;                  // projected current query
  std::vector<Tensor<T>> previous;  // projected window queries (attentive short-term only)
  std::vector<Tensor<T>> window;    // projected window products
  std::vector<Tensor<T>> hidden;    // GRU states over the window
  Attention<T> short_term;
  Attention<T> long_term;
  Tensor<T> fused;
  Tensor<T> intent;  // tower output
};

struct RankedItem {
  std::uint32_t product = 0;
  double score = 0.0;
};
using RankedList = std::vector<RankedItem>;

// Descending by score, ties by ascending product index.
inline RankedList rank_scores(std::span<const double> scores) {
  RankedList out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = {static_cast<std::uint32_t>(i), scores[i]};
  std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.score != b.score ? a.score > b.score : a.product < b.product;
  });
  return out;
}

template <typename T>
class Model {
 public:
  Model() = default;
  Model(Config cfg, Params<T> params) : config_(std::move(cfg)), params_(std::move(params)) {
    config_.validate();
    wiring_ = config_.wiring();
  }

  static Model init(const Config& cfg) { return Model(cfg, Params<T>::xavier(cfg, cfg.seed)); }

  const Config& config() const { return config_; }
  const Wiring& wiring() const { return wiring_; }
  Params<T>& params() { return params_; }
  const Params<T>& params() const { return params_; }

  Model clone() const { return Model(config_, params_.clone()); }

  template <typename U>
  Model<U> cast() const {
    return Model<U>(config_, params_.template cast<U>());
  }

  Tensor<T> project_product(Tape<T>& tape, std::span<const T> raw) const {
    return project(tape, params_.proj_w, params_.proj_b, Tensor<T>::vector(raw));
  }
  Tensor<T> project_query(Tape<T>& tape, std::span<const T> raw) const {
    if (params_.query_proj_w.defined()) {
      return project(tape, params_.query_proj_w, params_.query_proj_b, Tensor<T>::vector(raw));
    }
    return project(tape, params_.proj_w, params_.proj_b, Tensor<T>::vector(raw));
  }

  // Forward pass for the pair at `target`, using the m pairs before it.
  IntentTrace<T> intent(Tape<T>& tape, const InputTable<T>& inputs, const History& history, std::size_t target,
                        std::span<const T> g) const {
    const std::size_t m = config_.m;
    if (target >= history.size()) throw Error("intent: target beyond history");
    if (target < m) throw Error("intent: fewer than m purchases precede the target; pad the history first");
    if (g.size() != config_.k) throw Error("intent: long-term state has wrong width");
    IntentTrace<T> tr;
    tr.query = project_query(tape, inputs.query(history.queries[target]));
    std::vector<Tensor<T>> parts{tr.query};
    const auto g_tensor = Tensor<T>::vector(g);
    if (wiring_.short_term) {
      for (std::size_t j = target - m; j < target; ++j) {
        tr.window.push_back(project_product(tape, inputs.product(history.products[j])));
        if (wiring_.short_attention) tr.previous.push_back(project_query(tape, inputs.query(history.queries[j])));
      }
      tr.hidden = encode_short_term(tape, params_, std::span<const Tensor<T>>(tr.window), g_tensor, m);
      tr.short_term = short_term_attention(tape, params_, tr.query, std::span<const Tensor<T>>(tr.previous),
                                           std::span<const Tensor<T>>(tr.hidden), wiring_.short_attention);
      parts.push_back(tr.short_term.context);
    }
    if (wiring_.long_term) {
      tr.long_term = long_term_attention(tape, params_, g_tensor, tr.query, wiring_.long_attention);
      parts.push_back(tr.long_term.context);
    }
    tr.fused = nn::concat(tape, std::span<const Tensor<T>>(parts));
    tr.intent = tower(tape, params_, tr.fused);
    return tr;
  }

  // A user with no history: g = 0 and an empty window, so every preference
  // part of the fused vector is zero and only the query drives the tower.
  IntentTrace<T> cold_intent(Tape<T>& tape, std::span<const T> raw_query) const {
    IntentTrace<T> tr;
    tr.query = project_query(tape, raw_query);
    std::vector<Tensor<T>> parts{tr.query};
    for (std::size_t i = 1; i < wiring_.fusion_parts(); ++i) parts.push_back(Tensor<T>::zeros({config_.k}));
    tr.fused = nn::concat(tape, std::span<const Tensor<T>>(parts));
    tr.intent = tower(tape, params_, tr.fused);
    return tr;
  }

  // cosine(intent, projected product)
  Tensor<T> score(Tape<T>& tape, const IntentTrace<T>& trace, std::span<const T> raw_product) const {
    return nn::cosine(tape, trace.intent, project_product(tape, raw_product));
  }

  // Final GRU state over the m pairs before `target`, started from g. No gradient.
  std::vector<T> window_summary(const InputTable<T>& inputs, const History& history, std::size_t target,
                                std::span<const T> g) const {
    Tape<T> tape(false);
    std::vector<Tensor<T>> window;
    for (std::size_t j = target - config_.m; j < target; ++j) {
      window.push_back(project_product(tape, inputs.product(history.products[j])));
    }
    auto hidden = encode_short_term(tape, params_, std::span<const Tensor<T>>(window), Tensor<T>::vector(g), config_.m);
    auto v = hidden.back().values();
    return {v.begin(), v.end()};
  }

  LongTermState<T> initial_state() const { return {std::vector<T>(config_.k, T(0)), 0, config_.m}; }

  // Applies every long-term update whose window completes at or before `target`:
  // after each block of m purchases, g <- (1 - beta) g + beta h'.
  void advance(LongTermState<T>& state, const InputTable<T>& inputs, const History& history,
               std::size_t target) const {
    if (target < state.position) throw Error("advance: long-term state cannot move backwards");
    const std::size_t m = config_.m;
    for (std::size_t n = state.position + 1; n <= target; ++n) {
      if (n >= m && n % m == 0) {
        auto h = window_summary(inputs, history, n, state.g);
        state.g = update_long_term<T>(state.g, h, config_.beta);
      }
    }
    state.position = target;
  }

  // Projected catalog, row-major [products x k].
  std::vector<T> project_catalog(const InputTable<T>& inputs) const {
    Tape<T> tape(false);
    std::vector<T> out;
    out.reserve(inputs.products.size());
    for (std::size_t i = 0; i < inputs.num_products(); ++i) {
      const auto projected = project_product(tape, inputs.product(i));
      out.insert(out.end(), projected.values().begin(), projected.values().end());
    }
    return out;
  }

  // Cosine of the intent against every projected product.
  std::vector<double> score_catalog(std::span<const T> intent, std::span<const T> projected) const {
    const std::size_t k = config_.k;
    double nq = 0.0;
    for (auto v : intent) nq += static_cast<double>(v) * v;
    if (!(nq > 0.0)) throw Error("score_catalog: zero-norm intent");
    nq = std::sqrt(nq);
    std::vector<double> scores(projected.size() / k);
    for (std::size_t p = 0; p < scores.size(); ++p) {
      const T* row = projected.data() + p * k;
      double dp = 0.0, np = 0.0;
      for (std::size_t d = 0; d < k; ++d) {
        dp += static_cast<double>(intent[d]) * row[d];
        np += static_cast<double>(row[d]) * row[d];
      }
      if (!(np > 0.0)) throw Error("score_catalog: zero-norm product " + std::to_string(p));
      // Same arithmetic as nn::cosine, rounded to the model scalar.
      scores[p] = static_cast<double>(static_cast<T>(std::clamp(dp / (nq * std::sqrt(np)), -1.0, 1.0)));
    }
    return scores;
  }

  RankedList rank_catalog(std::span<const T> intent, std::span<const T> projected) const {
    auto scores = score_catalog(intent, projected);
    return rank_scores(scores);
  }

 private:
  Config config_;
  Wiring wiring_;
  Params<T> params_;
};

}  // namespace alstp::model
