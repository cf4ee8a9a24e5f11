#include "alstp/text.hpp"

#include <cctype>

namespace alstp::text {

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.append(sep);
    out.append(words[i]);
  }
  return out;
}

const StopwordSet& english_stopwords() {
  // NLTK English list.
  static const StopwordSet words = {
      "i",       "me",      "my",      "myself",  "we",         "our",     "ours",    "ourselves",
      "you",     "your",    "yours",   "yourself", "yourselves", "he",     "him",     "his",
      "himself", "she",     "her",     "hers",    "herself",    "it",      "its",     "itself",
      "they",    "them",    "their",   "theirs",  "themselves", "what",    "which",   "who",
      "whom",    "this",    "that",    "these",   "those",      "am",      "is",      "are",
      "was",     "were",    "be",      "been",    "being",      "have",    "has",     "had",
      "having",  "do",      "does",    "did",     "doing",      "a",       "an",      "the",
      "and",     "but",     "if",      "or",      "because",    "as",      "until",   "while",
      "of",      "at",      "by",      "for",     "with",       "about",   "against", "between",
      "into",    "through", "during",  "before",  "after",      "above",   "below",   "to",
      "from",    "up",      "down",    "in",      "out",        "on",      "off",     "over",
      "under",   "again",   "further", "then",    "once",       "here",    "there",   "when",
      "where",   "why",     "how",     "all",     "any",        "both",    "each",    "few",
      "more",    "most",    "other",   "some",    "such",       "no",      "nor",     "not",
      "only",    "own",     "same",    "so",      "than",       "too",     "very",    "s",
      "t",       "can",     "will",    "just",    "don",        "should",  "now",     "d",
      "ll",      "m",       "o",       "re",      "ve",         "y",       "ain",     "aren",
      "couldn",  "didn",    "doesn",   "hadn",    "hasn",       "haven",   "isn",     "ma",
      "mightn",  "mustn",   "needn",   "shan",    "shouldn",    "wasn",    "weren",   "won",
      "wouldn",
  };
  return words;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace alstp::text
