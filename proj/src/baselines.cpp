#include "alstp/baselines.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <map>

#include "alstp/tensor.hpp"

namespace alstp::baselines {

LanguageModelIndex::LanguageModelIndex(const std::vector<std::vector<std::string>>& documents) {
  tf_.resize(documents.size());
  doc_length_.resize(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& w : documents[d]) {
      ++tf_[d][w];
      ++cf_[w];
    }
    doc_length_[d] = documents[d].size();
    collection_length_ += documents[d].size();
  }
}

std::uint64_t LanguageModelIndex::term_frequency(const std::string& w, std::size_t d) const {
  auto it = tf_.at(d).find(w);
  return it == tf_[d].end() ? 0 : it->second;
}

double LanguageModelIndex::collection_probability(const std::string& w) const {
  auto it = cf_.find(w);
  if (it == cf_.end() || collection_length_ == 0) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(collection_length_);
}

double LanguageModelIndex::collection_mass() const {
  double total = 0.0;
  for (const auto& [w, n] : cf_) total += static_cast<double>(n) / static_cast<double>(collection_length_);
  return total;
}

double LanguageModelIndex::ql_score(const std::vector<std::string>& query, std::size_t doc, double mu) const {
  if (!(mu > 0.0)) throw Error("ql_score: mu must be positive");
  const double denom = static_cast<double>(doc_length_.at(doc)) + mu;
  double score = 0.0;
  for (const auto& w : query) {
    const double pc = collection_probability(w);
    if (pc == 0.0) continue;
    score += std::log((static_cast<double>(term_frequency(w, doc)) + mu * pc) / denom);
  }
  return score;
}

std::vector<std::vector<std::string>> user_word_profiles(const corpus::Corpus& corpus, std::size_t min_count) {
  std::vector<std::vector<std::string>> profiles(corpus.users.size());
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& s = corpus.splits[u];
    std::map<std::string, std::size_t> counts;
    for (std::size_t j = s.begin; j < s.valid; ++j) {
      for (const auto& w : corpus.review_tokens[j]) ++counts[w];
    }
    for (const auto& [w, n] : counts) {
      if (n > min_count) profiles[u].push_back(w);
    }
  }
  return profiles;
}

double uql_score(const LanguageModelIndex& index, const std::vector<std::string>& profile,
                 const std::vector<std::string>& query, std::size_t doc, double mu, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("uql_score: lambda must lie in [0, 1]");
  const double q = index.ql_score(query, doc, mu);
  if (profile.empty()) return q;
  return lambda * q + (1.0 - lambda) * index.ql_score(profile, doc, mu);
}

namespace {

template <typename Score>
eval::EvalResult rank_all(const corpus::Corpus& corpus, const LanguageModelIndex& index, eval::Split split,
                          std::size_t cutoff, Score score) {
  eval::EvalResult result;
  std::vector<double> scores(index.num_documents());
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& s = corpus.splits[u];
    const std::size_t row = split == eval::Split::Validation ? s.valid : s.test;
    const auto& it = corpus.interactions[row];
    const auto query = corpus.query_tokens(it.query);
    for (std::size_t d = 0; d < scores.size(); ++d) scores[d] = score(u, query, d);
    auto ranked = model::rank_scores(scores);
    result.instances.push_back({static_cast<std::uint32_t>(u), row - s.begin, it.product, eval::rank_of(ranked, it.product)});
  }
  auto ranks = result.ranks();
  result.metrics = eval::aggregate(ranks, cutoff);
  return result;
}

}  // namespace

eval::EvalResult evaluate_ql(const corpus::Corpus& corpus, const LanguageModelIndex& index, eval::Split split,
                             const BaselineConfig& cfg) {
  return rank_all(corpus, index, split, cfg.cutoff, [&](std::size_t, const std::vector<std::string>& q, std::size_t d) {
    return index.ql_score(q, d, cfg.mu);
  });
}

eval::EvalResult evaluate_uql(const corpus::Corpus& corpus, const LanguageModelIndex& index,
                              const std::vector<std::vector<std::string>>& profiles, eval::Split split,
                              const BaselineConfig& cfg) {
  std::size_t empty = 0;
  for (const auto& p : profiles) empty += p.empty();
  if (empty) spdlog::warn("{} user(s) have an empty word profile; UQL falls back to QL for them", empty);
  return rank_all(corpus, index, split, cfg.cutoff, [&](std::size_t u, const std::vector<std::string>& q, std::size_t d) {
    return uql_score(index, profiles.at(u), q, d, cfg.mu, cfg.lambda);
  });
}

}  // namespace alstp::baselines
