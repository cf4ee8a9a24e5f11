#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace alstp::text {

using StopwordSet = std::unordered_set<std::string>;

// Lowercases ASCII letters, treats every non-alphanumeric byte as a separator.
std::vector<std::string> tokenize(std::string_view s);

std::string join(const std::vector<std::string>& words, std::string_view sep = " ");

// Fixed English stopword list shipped with the library.
const StopwordSet& english_stopwords();

// 64-bit FNV-1a; stable across platforms, used for seed derivation.
std::uint64_t fnv1a(std::string_view s);

}  // namespace alstp::text
