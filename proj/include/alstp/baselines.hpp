#pragma once

// Query likelihood with Dirichlet smoothing, and its extension that mixes in
// a per-user model of frequent review words.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "alstp/corpus.hpp"
#include "alstp/metrics.hpp"

namespace alstp::baselines {

class LanguageModelIndex {
 public:
  // One document per product: its concatenated training reviews.
  explicit LanguageModelIndex(const std::vector<std::vector<std::string>>& documents);

  std::size_t num_documents() const { return doc_length_.size(); }
  std::size_t doc_length(std::size_t d) const { return doc_length_[d]; }
  std::uint64_t term_frequency(const std::string& w, std::size_t d) const;
  // cf_w / |C|; 0 for out-of-collection words.
  double collection_probability(const std::string& w) const;
  double collection_mass() const;  // sum of P(w|C) over the collection vocabulary

  // sum_{w in query} log((tf_{w,D} + mu P(w|C)) / (|D| + mu)).
  // Out-of-collection words are skipped.
  double ql_score(const std::vector<std::string>& query, std::size_t doc, double mu) const;

 private:
  std::vector<std::unordered_map<std::string, std::uint64_t>> tf_;
  std::vector<std::uint64_t> doc_length_;
  std::unordered_map<std::string, std::uint64_t> cf_;
  std::uint64_t collection_length_ = 0;
};

// Words that occur more than `min_count` times in a user's training reviews, sorted.
std::vector<std::vector<std::string>> user_word_profiles(const corpus::Corpus& corpus, std::size_t min_count = 50);

// lambda * QL(Q|D) + (1 - lambda) * QL(U|D), mixed in the log domain.
// An empty profile falls back to QL.
double uql_score(const LanguageModelIndex& index, const std::vector<std::string>& profile,
                 const std::vector<std::string>& query, std::size_t doc, double mu, double lambda);

struct BaselineConfig {
  double mu = 2000.0;
  double lambda = 1.0;  // 1 reduces UQL to QL
  std::size_t profile_min_count = 50;
  std::size_t cutoff = eval::kDefaultCutoff;
};

// Ranks the full catalog for each user's validation/test purchase (ties by product index).
eval::EvalResult evaluate_ql(const corpus::Corpus& corpus, const LanguageModelIndex& index, eval::Split split,
                             const BaselineConfig& cfg);
eval::EvalResult evaluate_uql(const corpus::Corpus& corpus, const LanguageModelIndex& index,
                              const std::vector<std::vector<std::string>>& profiles, eval::Split split,
                              const BaselineConfig& cfg);

}  // namespace alstp::baselines
