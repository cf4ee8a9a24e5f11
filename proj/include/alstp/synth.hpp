#pragma once

// Synthetic Amazon-format corpora with planted purchase structure.
//
// Catalog: 10 categories in two groups x 10 themes x 5 styles; every
// combination is exactly one product. Queries come from the category path,
// so the query narrows a purchase to 50 products and the user's preferences
// decide the rest:
//   planted-shortterm  each group has a session theme that persists for a run
//                      of purchases in that group, then switches.
//   planted-longterm   every user has a persistent style that drifts once; it
//                      only shows in group-A purchases, which occur at every
//                      sixth position (so never inside the recent window of a
//                      group-A target).
//   mixed              session themes plus a persistent style in both groups.

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "alstp/corpus.hpp"

namespace alstp::synth {

enum class Profile { ShortTerm, LongTerm, Mixed };

Profile parse_profile(std::string_view name);
std::string_view profile_name(Profile p);

struct SynthOptions {
  Profile profile = Profile::Mixed;
  std::size_t users = 200;
  std::size_t purchases = 30;
  std::uint64_t seed = 42;
  double session_switch = 0.2;  // chance a group's theme changes after a purchase in it
  double style_loyalty = 0.9;   // chance a purchase follows the user's style
};

inline constexpr std::size_t kCategories = 10;
inline constexpr std::size_t kThemes = 10;
inline constexpr std::size_t kStyles = 5;
inline constexpr std::size_t kCatalogSize = kCategories * kThemes * kStyles;

struct ProductFacets {
  std::size_t category = 0;
  std::size_t theme = 0;
  std::size_t style = 0;
  std::size_t group() const { return category < kCategories / 2 ? 0 : 1; }
};

// Product i <-> facets: category = i % 10, theme = (i / 10) % 10, style = i / 100.
ProductFacets facets(std::size_t product);
std::size_t product_index(const ProductFacets& f);
std::string product_id(std::size_t product);
std::vector<std::string> category_path(std::size_t category);

struct SynthCorpus {
  std::vector<corpus::RawReview> reviews;
  std::vector<corpus::ProductMeta> meta;
  nlohmann::json ground_truth;
};

SynthCorpus generate(const SynthOptions& options);

// reviews.json, meta.json (one object per line) and ground_truth.json.
void write(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace alstp::synth
