#include "alstp/trainer.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <numeric>

namespace alstp::train {

std::vector<std::uint32_t> sample_negatives(std::uint32_t positive, std::size_t catalog_size, std::size_t count,
                                            Rng& rng) {
  if (catalog_size < 2) throw Error("sample_negatives: catalog needs at least two products");
  if (positive >= catalog_size) throw Error("sample_negatives: positive outside catalog");
  // Draw from [0, n-2] and skip over the positive.
  std::uniform_int_distribution<std::size_t> pick(0, catalog_size - 2);
  std::vector<std::uint32_t> out(count);
  for (auto& id : out) {
    auto v = pick(rng);
    id = static_cast<std::uint32_t>(v >= positive ? v + 1 : v);
  }
  return out;
}

SgdMomentum::SgdMomentum(const Named& params, double lr, double momentum, double clip_norm)
    : lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {
  if (!(clip_norm > 0.0)) throw Error("clip norm must be positive");
  for (const auto& [name, t] : params) velocity_.emplace_back(t.size(), 0.0f);
}

StepStats SgdMomentum::step(const Named& params) {
  if (params.size() != velocity_.size()) throw Error("optimizer: parameter list changed shape");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    if (t.size() != velocity_[i].size()) throw Error("optimizer: velocity shape mismatch for " + name);
    if (!t.has_grad()) continue;
    for (auto g : t.grad()) {
      if (!std::isfinite(g)) throw Error("non-finite gradient in parameter " + name);
      sq += static_cast<double>(g) * g;
    }
  }
  StepStats stats;
  stats.grad_norm = std::sqrt(sq);
  const double scale = stats.grad_norm > clip_norm_ ? clip_norm_ / stats.grad_norm : 1.0;
  stats.applied_norm = stats.grad_norm * scale;
  const float fscale = static_cast<float>(scale);
  const float fmom = static_cast<float>(momentum_);
  const float flr = static_cast<float>(lr_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto t = params[i].second;
    auto& v = velocity_[i];
    auto values = t.mutable_values();
    auto grad = t.grad();
    for (std::size_t j = 0; j < v.size(); ++j) {
      const float g = grad.empty() ? 0.0f : grad[j] * fscale;
      v[j] = fmom * v[j] + g;
      values[j] -= flr * v[j];
    }
  }
  return stats;
}

Trainer::Trainer(model::Config config, const Dataset& data)
    : config_(std::move(config)),
      data_(data),
      model_(model::Model<float>::init(config_)),
      optimizer_(model_.params().named(), config_.lr, config_.momentum, config_.clip_norm),
      rng_(derive_seed(config_.seed, 0x545249ull)) {
  if (data.inputs.dim != config_.k) {
    throw Error("embedding width " + std::to_string(data.inputs.dim) + " does not match k = " +
                std::to_string(config_.k));
  }
  if (data.num_products() < 2) throw Error("training needs at least two products");
  for (const auto& u : data.users) {
    if (u.train_end < config_.m + 1) {
      spdlog::warn("user {} has {} training purchases (< m+1); it only initializes long-term state", u.user,
                   u.train_end);
    }
  }
}

EpochLog Trainer::run_epoch(std::size_t epoch) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = config_.m;
  const auto named = model_.params().named();
  EpochLog log;
  log.epoch = epoch;
  double loss_sum = 0.0;

  std::vector<std::size_t> order(data_.users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  for (auto ui : order) {
    const auto& seq = data_.users[ui];
    auto state = model_.initial_state();
    for (std::size_t n = m; n < seq.train_end; ++n) {
      model_.advance(state, data_.inputs, seq.history, n);
      const auto positive = seq.history.products[n];
      for (auto negative : sample_negatives(positive, data_.num_products(), config_.negatives, rng_)) {
        model_.params().zero_grad();
        nn::Tape<float> tape;
        auto trace = model_.intent(tape, data_.inputs, seq.history, n, state.g);
        auto s_pos = model_.score(tape, trace, data_.inputs.product(positive));
        auto s_neg = model_.score(tape, trace, data_.inputs.product(negative));
        auto loss = bpr_loss(tape, s_pos, s_neg, config_.l2, model_.params());
        tape.backward(loss);
        auto stats = optimizer_.step(named);
        loss_sum += loss.item();
        ++log.steps;
        log.max_applied_norm = std::max(log.max_applied_norm, stats.applied_norm);
        if (on_step) on_step({epoch, seq.user, n, negative, loss.item(), stats});
      }
    }
  }
  log.mean_loss = log.steps ? loss_sum / static_cast<double>(log.steps) : 0.0;
  log.validation = eval::evaluate(model_, data_, eval::Split::Validation, eval_threads).metrics;
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

TrainResult Trainer::train() {
  TrainResult result;
  result.model = model_.clone();
  double best = -1.0;
  for (std::size_t e = 1; e <= config_.epochs; ++e) {
    auto log = run_epoch(e);
    spdlog::info("epoch {} loss {:.5f} valid HR {:.4f} MRR {:.4f} NDCG {:.4f} ({:.1f}s)", e, log.mean_loss,
                 log.validation.hr, log.validation.mrr, log.validation.ndcg, log.wall_seconds);
    if (on_epoch) on_epoch(log);
    result.log.push_back(log);
    if (!config_.select_on_validation || log.validation.ndcg > best) {
      best = log.validation.ndcg;
      result.best_epoch = e;
      result.model = model_.clone();
    }
  }
  for (const auto& seq : data_.users) {
    auto state = result.model.initial_state();
    result.model.advance(state, data_.inputs, seq.history, seq.train_end);
    result.long_term.push_back(std::move(state.g));
  }
  return result;
}

}  // namespace alstp::train
