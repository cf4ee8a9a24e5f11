#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alstp/text.hpp"

namespace alstp::corpus {

namespace fs = std::filesystem;

struct RawReview {
  std::string user_id;
  std::string product_id;
  std::string review_text;
  std::int64_t timestamp = 0;
};

struct ProductMeta {
  std::string product_id;
  // Each path is ordered root -> leaf.
  std::vector<std::vector<std::string>> category_paths;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t parsed = 0;
  std::size_t skipped = 0;
};

// One JSON object per line (Amazon review dump layout). Malformed lines are
// skipped and counted; an unreadable file or zero valid records throws.
std::vector<RawReview> parse_reviews(const fs::path& path, ParseStats* stats = nullptr);
std::vector<ProductMeta> parse_meta(const fs::path& path, ParseStats* stats = nullptr);

// Root-to-leaf category terms -> query string. Duplicate words keep their last
// (deepest) position. Returns an empty string when nothing survives filtering.
std::string extract_query(std::span<const std::string> path, const text::StopwordSet& stopwords);

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t product = 0;
  std::uint32_t query = 0;
  std::int64_t timestamp = 0;
};

// Per-user index range into Corpus::interactions:
// train = [begin, valid), validation = valid, test = test, end = test + 1.
struct UserSplit {
  std::size_t begin = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  std::size_t train_size() const { return valid - begin; }
};

struct CorpusOptions {
  std::size_t min_user_interactions = 10;
  std::size_t min_product_interactions = 1;
  std::size_t min_word_freq = 5;
  std::uint64_t seed = 42;
};

struct CorpusCounts {
  std::size_t raw_reviews = 0;
  std::size_t products_without_query = 0;
  std::size_t dropped_users = 0;
  std::size_t filter_rounds = 0;
};

struct Corpus {
  CorpusOptions options;
  CorpusCounts counts;

  std::vector<std::string> users;     // sorted ids
  std::vector<std::string> products;  // sorted ids; index order is the tie-break order
  std::vector<std::string> queries;   // query_id -> text, sorted by text

  // Grouped by user (user order), chronological within a user.
  std::vector<Interaction> interactions;
  std::vector<UserSplit> splits;

  // Word vocabulary with frequencies, sorted by word.
  std::vector<std::pair<std::string, std::uint64_t>> vocab;

  // Vocabulary-filtered review tokens aligned with `interactions`; empty for
  // validation and test interactions.
  std::vector<std::vector<std::string>> review_tokens;

  std::span<const Interaction> user_interactions(std::size_t user) const {
    const auto& s = splits[user];
    return std::span<const Interaction>(interactions).subspan(s.begin, s.size());
  }

  // Concatenated training reviews per product, chronological.
  std::vector<std::vector<std::string>> product_documents() const;

  std::vector<std::string> query_tokens(std::uint32_t query) const { return text::tokenize(queries[query]); }

  void save(const fs::path& dir) const;
  static Corpus load(const fs::path& dir);
};

// Filters to a fixpoint, picks one query per product, orders and splits every
// user's history. Throws when nothing survives.
Corpus build_corpus(const std::vector<RawReview>& reviews, const std::vector<ProductMeta>& meta,
                    const CorpusOptions& options, const text::StopwordSet& stopwords = text::english_stopwords());

// File names written by Corpus::save.
inline constexpr const char* kCorpusFiles[] = {"interactions.tsv", "queries.tsv", "vocab.tsv",
                                               "split.json",       "manifest.json", "train_reviews.tsv"};

}  // namespace alstp::corpus
