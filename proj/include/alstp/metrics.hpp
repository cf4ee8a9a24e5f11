#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "alstp/dataset.hpp"
#include "alstp/model.hpp"

namespace alstp::eval {

inline constexpr std::size_t kDefaultCutoff = 20;

// Single relevant item per instance; ranks are 1-based.
double hit_ratio(std::size_t rank, std::size_t cutoff = kDefaultCutoff);
double reciprocal_rank(std::size_t rank, std::size_t cutoff = kDefaultCutoff);
double ndcg_single(std::size_t rank, std::size_t cutoff = kDefaultCutoff);

struct Metrics {
  double hr = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  std::size_t instances = 0;
};

Metrics aggregate(std::span<const std::size_t> ranks, std::size_t cutoff = kDefaultCutoff);

// 1-based position of `product` in a ranked list.
std::size_t rank_of(const model::RankedList& list, std::uint32_t product);

struct Instance {
  std::uint32_t user = 0;
  std::size_t target = 0;  // index into the user's history
  std::uint32_t product = 0;
  std::size_t rank = 0;
};

struct EvalResult {
  std::vector<Instance> instances;
  Metrics metrics;

  std::vector<std::size_t> ranks() const;
  // Per-instance values of "hr", "mrr" or "ndcg".
  std::vector<double> per_instance(const std::string& metric, std::size_t cutoff = kDefaultCutoff) const;
};

enum class Split { Validation, Test };

// Scores the full catalog for every user's validation or test purchase.
EvalResult evaluate(const model::Model<float>& model, const Dataset& data, Split split, std::size_t threads = 1);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  bool degenerate = false;  // zero variance of the differences
};

// Two-sided paired t-test with n-1 degrees of freedom.
TTest paired_ttest(std::span<const double> a, std::span<const double> b);

struct AttentionRecord {
  std::uint32_t user = 0;
  std::size_t target = 0;
  std::uint32_t query = 0;
  std::vector<std::uint32_t> previous_queries;
  std::vector<std::uint32_t> previous_products;
  std::vector<float> short_weights;
  std::vector<float> long_weights;
};

AttentionRecord dump_attention(const model::Model<float>& model, const Dataset& data, std::size_t user_index,
                               Split split);

nlohmann::json to_json(const Metrics& m);

}  // namespace alstp::eval
