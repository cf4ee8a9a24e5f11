#include "alstp/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <thread>

namespace alstp::eval {

double hit_ratio(std::size_t rank, std::size_t cutoff) { return rank >= 1 && rank <= cutoff ? 1.0 : 0.0; }

double reciprocal_rank(std::size_t rank, std::size_t cutoff) {
  return rank >= 1 && rank <= cutoff ? 1.0 / static_cast<double>(rank) : 0.0;
}

double ndcg_single(std::size_t rank, std::size_t cutoff) {
  return rank >= 1 && rank <= cutoff ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

Metrics aggregate(std::span<const std::size_t> ranks, std::size_t cutoff) {
  Metrics m;
  m.instances = ranks.size();
  if (ranks.empty()) return m;
  for (auto r : ranks) {
    m.hr += hit_ratio(r, cutoff);
    m.mrr += reciprocal_rank(r, cutoff);
    m.ndcg += ndcg_single(r, cutoff);
  }
  const double n = static_cast<double>(ranks.size());
  m.hr /= n;
  m.mrr /= n;
  m.ndcg /= n;
  return m;
}

std::size_t rank_of(const model::RankedList& list, std::uint32_t product) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].product == product) return i + 1;
  }
  throw Error("rank_of: product " + std::to_string(product) + " is not in the ranked list");
}

std::vector<std::size_t> EvalResult::ranks() const {
  std::vector<std::size_t> r;
  r.reserve(instances.size());
  for (const auto& i : instances) r.push_back(i.rank);
  return r;
}

std::vector<double> EvalResult::per_instance(const std::string& metric, std::size_t cutoff) const {
  double (*fn)(std::size_t, std::size_t) = nullptr;
  if (metric == "hr") fn = hit_ratio;
  else if (metric == "mrr") fn = reciprocal_rank;
  else if (metric == "ndcg") fn = ndcg_single;
  else throw Error("unknown metric: " + metric);
  std::vector<double> out;
  for (const auto& i : instances) out.push_back(fn(i.rank, cutoff));
  return out;
}

namespace {

std::size_t target_of(const UserSequence& u, Split split) { return split == Split::Validation ? u.valid : u.test; }

}  // namespace

EvalResult evaluate(const model::Model<float>& model, const Dataset& data, Split split, std::size_t threads) {
  const auto projected = model.project_catalog(data.inputs);
  EvalResult result;
  result.instances.resize(data.users.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      const auto& seq = data.users[u];
      const auto target = target_of(seq, split);
      auto state = model.initial_state();
      model.advance(state, data.inputs, seq.history, target);
      nn::Tape<float> tape(false);
      auto trace = model.intent(tape, data.inputs, seq.history, target, state.g);
      auto ranked = model.rank_catalog(trace.intent.values(), projected);
      const auto product = seq.history.products[target];
      result.instances[u] = {seq.user, target, product, rank_of(ranked, product)};
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, data.users.size()));
  if (threads == 1) {
    work(0, data.users.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (data.users.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(data.users.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  auto ranks = result.ranks();
  result.metrics = aggregate(ranks, model.config().cutoff);
  return result;
}

TTest paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("paired_ttest: samples differ in length");
  if (a.size() < 2) throw Error("paired_ttest: need at least two pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTest r;
  r.n = n;
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) {
    r.degenerate = true;
    r.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    r.p = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t dist(static_cast<double>(n - 1));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

AttentionRecord dump_attention(const model::Model<float>& model, const Dataset& data, std::size_t user_index,
                               Split split) {
  const auto& seq = data.users.at(user_index);
  const auto target = target_of(seq, split);
  auto state = model.initial_state();
  model.advance(state, data.inputs, seq.history, target);
  nn::Tape<float> tape(false);
  auto trace = model.intent(tape, data.inputs, seq.history, target, state.g);

  AttentionRecord rec;
  rec.user = seq.user;
  rec.target = target;
  rec.query = seq.history.queries[target];
  for (std::size_t j = target - model.config().m; j < target; ++j) {
    rec.previous_queries.push_back(seq.history.queries[j]);
    rec.previous_products.push_back(seq.history.products[j]);
  }
  if (trace.short_term.weights.defined()) {
    auto w = trace.short_term.weights.values();
    rec.short_weights.assign(w.begin(), w.end());
  }
  if (trace.long_term.weights.defined()) {
    auto w = trace.long_term.weights.values();
    rec.long_weights.assign(w.begin(), w.end());
  }
  return rec;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"hr", m.hr}, {"mrr", m.mrr}, {"ndcg", m.ndcg}, {"instances", m.instances}};
}

}  // namespace alstp::eval
