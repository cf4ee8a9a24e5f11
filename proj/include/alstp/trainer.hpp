#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "alstp/dataset.hpp"
#include "alstp/metrics.hpp"
#include "alstp/model.hpp"
#include "alstp/rng.hpp"

namespace alstp::train {

// -log(sigmoid(s_pos - s_neg)) + l2 * sum ||theta||^2 over the model parameters.
template <typename T>
nn::Tensor<T> bpr_loss(nn::Tape<T>& tape, const nn::Tensor<T>& s_pos, const nn::Tensor<T>& s_neg, double l2,
                       const model::Params<T>& params) {
  auto loss = nn::scale(tape, nn::log_sigmoid(tape, nn::sub(tape, s_pos, s_neg)), T(-1));
  if (l2 > 0.0) {
    std::vector<nn::Tensor<T>> norms;
    params.for_each([&](const std::string&, const nn::Tensor<T>& t) { norms.push_back(nn::sq_norm(tape, t)); });
    auto total = nn::sum(tape, nn::concat(tape, std::span<const nn::Tensor<T>>(norms)));
    loss = nn::add(tape, loss, nn::scale(tape, total, static_cast<T>(l2)));
  }
  return loss;
}

// N uniform draws (with replacement) from the catalog minus `positive`.
std::vector<std::uint32_t> sample_negatives(std::uint32_t positive, std::size_t catalog_size, std::size_t count,
                                            Rng& rng);

struct StepStats {
  double grad_norm = 0.0;     // before clipping
  double applied_norm = 0.0;  // after clipping
};

// SGD with classical momentum and global-norm clipping:
//   g <- g * min(1, clip / ||g||);  v <- mu v + g;  theta <- theta - lr v
class SgdMomentum {
 public:
  using Named = std::vector<std::pair<std::string, nn::Tensor<float>>>;

  SgdMomentum(const Named& params, double lr, double momentum, double clip_norm);

  // Reads the gradients held by `params`; a non-finite gradient throws and
  // leaves parameters and velocities untouched.
  StepStats step(const Named& params);

  const std::vector<std::vector<float>>& velocities() const { return velocity_; }

 private:
  double lr_;
  double momentum_;
  double clip_norm_;
  std::vector<std::vector<float>> velocity_;
};

struct StepInfo {
  std::size_t epoch = 0;
  std::uint32_t user = 0;
  std::size_t target = 0;
  std::uint32_t negative = 0;
  double loss = 0.0;
  StepStats stats;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::size_t steps = 0;
  double max_applied_norm = 0.0;
  eval::Metrics validation;
  double wall_seconds = 0.0;
};

struct TrainResult {
  model::Model<float> model;  // selected checkpoint
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
  // Long-term state per user after the training purchases, under the selected parameters.
  std::vector<std::vector<float>> long_term;
};

class Trainer {
 public:
  Trainer(model::Config config, const Dataset& data);

  // Optional instrumentation hooks.
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
  std::size_t eval_threads = 1;

  const model::Model<float>& model() const { return model_; }
  model::Model<float>& model() { return model_; }

  // One chronological sweep over every user's training purchases.
  EpochLog run_epoch(std::size_t epoch);

  TrainResult train();

 private:
  model::Config config_;
  const Dataset& data_;
  model::Model<float> model_;
  SgdMomentum optimizer_;
  Rng rng_;
};

}  // namespace alstp::train
