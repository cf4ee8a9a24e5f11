#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "alstp/tensor.hpp"

namespace alstp::nn {

struct GradCheckOptions {
  double epsilon = 1e-4;
  // Coordinates checked per tensor; 0 means every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

// Compares tape gradients of a scalar function against central differences.
// Returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over the
// checked coordinates. `f` must rebuild the loss from the current tensor values
// each time it is called.
template <typename T>
double grad_check(const std::function<Tensor<T>(Tape<T>&)>& f, std::vector<Tensor<T>> params,
                  const GradCheckOptions& opts = {}) {
  if (!(opts.epsilon > 0)) throw Error("grad_check: epsilon must be positive");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape<T> tape;
    auto loss = f(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  auto eval = [&f] {
    Tape<T> tape(false);
    return static_cast<double>(f(tape).item());
  };

  std::mt19937_64 rng(opts.seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_tensor && coords.size() > opts.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_tensor);
    }
    auto values = p.mutable_values();
    for (auto i : coords) {
      const T saved = values[i];
      values[i] = static_cast<T>(saved + opts.epsilon);
      const double up = eval();
      values[i] = static_cast<T>(saved - opts.epsilon);
      const double down = eval();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace alstp::nn
