#include "alstp/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "alstp/rng.hpp"
#include "alstp/tensor.hpp"

namespace alstp::corpus {

using nlohmann::json;

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <typename Record, typename Parse>
std::vector<Record> parse_jsonl(const fs::path& path, ParseStats* stats, const char* what, Parse parse) {
  auto in = open_input(path);
  ParseStats local;
  std::vector<Record> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++local.lines;
    auto doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
    Record rec;
    if (!doc.is_object() || !parse(doc, rec)) {
      ++local.skipped;
      continue;
    }
    out.push_back(std::move(rec));
    ++local.parsed;
  }
  if (local.skipped) {
    spdlog::warn("{}: skipped {} malformed {} line(s) of {}", path.string(), local.skipped, what, local.lines);
  }
  if (stats) *stats = local;
  if (out.empty()) throw Error("no valid " + std::string(what) + " records in " + path.string());
  return out;
}

bool string_field(const json& doc, const char* key, std::string& out) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) return false;
  out = it->get<std::string>();
  return true;
}

}  // namespace

std::vector<RawReview> parse_reviews(const fs::path& path, ParseStats* stats) {
  return parse_jsonl<RawReview>(path, stats, "review", [](const json& doc, RawReview& r) {
    if (!string_field(doc, "reviewerID", r.user_id) || r.user_id.empty()) return false;
    if (!string_field(doc, "asin", r.product_id) || r.product_id.empty()) return false;
    string_field(doc, "reviewText", r.review_text);
    auto t = doc.find("unixReviewTime");
    if (t == doc.end() || !t->is_number_integer()) return false;
    r.timestamp = t->get<std::int64_t>();
    return r.timestamp >= 0;
  });
}

std::vector<ProductMeta> parse_meta(const fs::path& path, ParseStats* stats) {
  return parse_jsonl<ProductMeta>(path, stats, "metadata", [](const json& doc, ProductMeta& m) {
    if (!string_field(doc, "asin", m.product_id) || m.product_id.empty()) return false;
    auto read_path = [](const json& arr, std::vector<std::string>& out) {
      for (const auto& term : arr) {
        if (!term.is_string()) return false;
        out.push_back(term.get<std::string>());
      }
      return true;
    };
    if (auto c = doc.find("categories"); c != doc.end() && c->is_array()) {
      for (const auto& p : *c) {
        if (!p.is_array()) return false;
        std::vector<std::string> path;
        if (!read_path(p, path)) return false;
        if (!path.empty()) m.category_paths.push_back(std::move(path));
      }
    } else if (auto c1 = doc.find("category"); c1 != doc.end() && c1->is_array()) {
      std::vector<std::string> path;
      if (!read_path(*c1, path)) return false;
      if (!path.empty()) m.category_paths.push_back(std::move(path));
    }
    return true;
  });
}

std::string extract_query(std::span<const std::string> path, const text::StopwordSet& stopwords) {
  std::vector<std::string> words;
  for (const auto& term : path) {
    for (auto& w : text::tokenize(term)) {
      if (!stopwords.contains(w)) words.push_back(std::move(w));
    }
  }
  // Keep the deepest occurrence of each word.
  std::unordered_set<std::string> seen;
  std::vector<std::string> kept;
  for (auto it = words.rbegin(); it != words.rend(); ++it) {
    if (seen.insert(*it).second) kept.push_back(*it);
  }
  std::reverse(kept.begin(), kept.end());
  return text::join(kept);
}

Corpus build_corpus(const std::vector<RawReview>& reviews, const std::vector<ProductMeta>& meta,
                    const CorpusOptions& options, const text::StopwordSet& stopwords) {
  Corpus c;
  c.options = options;
  c.counts.raw_reviews = reviews.size();

  // Candidate queries per product, deduplicated and sorted for determinism.
  std::map<std::string, std::vector<std::string>> product_queries;
  for (const auto& m : meta) {
    std::set<std::string> qs;
    for (const auto& p : m.category_paths) {
      auto q = extract_query(p, stopwords);
      if (q.empty()) {
        spdlog::warn("product {}: category path empties out after filtering", m.product_id);
        continue;
      }
      qs.insert(std::move(q));
    }
    auto& dst = product_queries[m.product_id];
    dst.insert(dst.end(), qs.begin(), qs.end());
    std::sort(dst.begin(), dst.end());
    dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
  }

  std::vector<std::size_t> kept;
  kept.reserve(reviews.size());
  std::set<std::string> missing;
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    auto it = product_queries.find(reviews[i].product_id);
    if (it == product_queries.end() || it->second.empty()) {
      missing.insert(reviews[i].product_id);
      continue;
    }
    kept.push_back(i);
  }
  c.counts.products_without_query = missing.size();
  if (!missing.empty()) spdlog::warn("dropped reviews of {} product(s) without a usable query", missing.size());

  // Alternate user and product thresholds until nothing changes.
  for (;;) {
    ++c.counts.filter_rounds;
    std::unordered_map<std::string, std::size_t> per_user, per_product;
    for (auto i : kept) {
      ++per_user[reviews[i].user_id];
      ++per_product[reviews[i].product_id];
    }
    std::vector<std::size_t> next;
    next.reserve(kept.size());
    for (auto i : kept) {
      if (per_user[reviews[i].user_id] >= options.min_user_interactions &&
          per_product[reviews[i].product_id] >= options.min_product_interactions) {
        next.push_back(i);
      }
    }
    if (next.size() == kept.size()) break;
    kept.swap(next);
  }
  if (kept.empty()) throw Error("corpus is empty after filtering");

  std::set<std::string> user_set, product_set;
  for (auto i : kept) {
    user_set.insert(reviews[i].user_id);
    product_set.insert(reviews[i].product_id);
  }
  {
    std::set<std::string> all_users;
    for (const auto& r : reviews) all_users.insert(r.user_id);
    c.counts.dropped_users = all_users.size() - user_set.size();
  }
  c.users.assign(user_set.begin(), user_set.end());
  c.products.assign(product_set.begin(), product_set.end());

  // One query per product, chosen uniformly among its category paths.
  Rng rng(derive_seed(options.seed, 0x5155455259ull));
  std::vector<std::string> chosen(c.products.size());
  for (std::size_t p = 0; p < c.products.size(); ++p) {
    const auto& qs = product_queries.at(c.products[p]);
    std::uniform_int_distribution<std::size_t> pick(0, qs.size() - 1);
    chosen[p] = qs[qs.size() == 1 ? 0 : pick(rng)];
  }
  std::set<std::string> query_set(chosen.begin(), chosen.end());
  c.queries.assign(query_set.begin(), query_set.end());

  auto index_of = [](const std::vector<std::string>& sorted, const std::string& key) {
    return static_cast<std::uint32_t>(std::lower_bound(sorted.begin(), sorted.end(), key) - sorted.begin());
  };
  std::vector<std::uint32_t> product_query(c.products.size());
  for (std::size_t p = 0; p < c.products.size(); ++p) product_query[p] = index_of(c.queries, chosen[p]);

  // Group by user, order by (timestamp, input order).
  std::vector<std::vector<std::size_t>> by_user(c.users.size());
  for (auto i : kept) by_user[index_of(c.users, reviews[i].user_id)].push_back(i);
  std::vector<std::size_t> review_of;
  for (std::size_t u = 0; u < by_user.size(); ++u) {
    auto& idx = by_user[u];
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return reviews[a].timestamp < reviews[b].timestamp; });
    UserSplit s;
    s.begin = c.interactions.size();
    for (auto i : idx) {
      const auto p = index_of(c.products, reviews[i].product_id);
      c.interactions.push_back({static_cast<std::uint32_t>(u), p, product_query[p], reviews[i].timestamp});
      review_of.push_back(i);
    }
    s.end = c.interactions.size();
    s.test = s.end - 1;
    s.valid = s.end - 2;
    c.splits.push_back(s);
  }

  // Vocabulary: training reviews plus query texts; query words always survive.
  std::map<std::string, std::uint64_t> freq;
  std::set<std::string> query_words;
  std::vector<std::vector<std::string>> raw_tokens(c.interactions.size());
  for (const auto& s : c.splits) {
    for (std::size_t j = s.begin; j < s.valid; ++j) {
      raw_tokens[j] = text::tokenize(reviews[review_of[j]].review_text);
      for (const auto& w : raw_tokens[j]) ++freq[w];
    }
  }
  for (const auto& q : c.queries) {
    for (auto& w : text::tokenize(q)) {
      ++freq[w];
      query_words.insert(std::move(w));
    }
  }
  for (const auto& [w, n] : freq) {
    if (n >= options.min_word_freq || query_words.contains(w)) c.vocab.emplace_back(w, n);
  }
  std::unordered_set<std::string> in_vocab;
  for (const auto& [w, n] : c.vocab) in_vocab.insert(w);
  c.review_tokens.resize(c.interactions.size());
  for (std::size_t j = 0; j < raw_tokens.size(); ++j) {
    for (auto& w : raw_tokens[j]) {
      if (in_vocab.contains(w)) c.review_tokens[j].push_back(std::move(w));
    }
  }
  return c;
}

std::vector<std::vector<std::string>> Corpus::product_documents() const {
  std::vector<std::size_t> order;
  for (const auto& s : splits) {
    for (std::size_t j = s.begin; j < s.valid; ++j) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return interactions[a].timestamp < interactions[b].timestamp; });
  std::vector<std::vector<std::string>> docs(products.size());
  for (auto j : order) {
    auto& d = docs[interactions[j].product];
    d.insert(d.end(), review_tokens[j].begin(), review_tokens[j].end());
  }
  return docs;
}

void Corpus::save(const fs::path& dir) const {
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "interactions.tsv");
    out << "user_id\tproduct_id\tquery_id\ttimestamp\n";
    for (const auto& it : interactions) {
      out << users[it.user] << '\t' << products[it.product] << '\t' << it.query << '\t' << it.timestamp << '\n';
    }
  }
  {
    auto out = open_output(dir / "queries.tsv");
    out << "query_id\tquery_text\n";
    for (std::size_t q = 0; q < queries.size(); ++q) out << q << '\t' << queries[q] << '\n';
  }
  {
    auto out = open_output(dir / "vocab.tsv");
    out << "word\tfrequency\n";
    for (const auto& [w, n] : vocab) out << w << '\t' << n << '\n';
  }
  {
    auto out = open_output(dir / "train_reviews.tsv");
    out << "row\tuser_id\tproduct_id\ttimestamp\ttokens\n";
    for (const auto& s : splits) {
      for (std::size_t j = s.begin; j < s.valid; ++j) {
        const auto& it = interactions[j];
        out << j << '\t' << users[it.user] << '\t' << products[it.product] << '\t' << it.timestamp << '\t'
            << text::join(review_tokens[j]) << '\n';
      }
    }
  }
  {
    json users_json = json::array();
    for (std::size_t u = 0; u < splits.size(); ++u) {
      const auto& s = splits[u];
      users_json.push_back({{"user_id", users[u]}, {"begin", s.begin}, {"valid", s.valid}, {"test", s.test}, {"end", s.end}});
    }
    auto out = open_output(dir / "split.json");
    out << json{{"users", users_json}}.dump(1) << '\n';
  }
  {
    std::size_t train = 0;
    for (const auto& s : splits) train += s.train_size();
    json manifest = {
        {"format", "alstp-corpus"},
        {"version", 1},
        {"seed", options.seed},
        {"min_user_interactions", options.min_user_interactions},
        {"min_product_interactions", options.min_product_interactions},
        {"min_word_freq", options.min_word_freq},
        {"counts",
         {{"raw_reviews", counts.raw_reviews},
          {"products_without_query", counts.products_without_query},
          {"dropped_users", counts.dropped_users},
          {"filter_rounds", counts.filter_rounds},
          {"users", users.size()},
          {"products", products.size()},
          {"queries", queries.size()},
          {"interactions", interactions.size()},
          {"train_interactions", train},
          {"vocab", vocab.size()}}},
    };
    auto out = open_output(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_tsv(const fs::path& path, std::size_t min_cols) {
  auto in = open_input(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < min_cols) throw Error("malformed row in " + path.string() + ": " + line);
    rows.push_back(std::move(cols));
  }
  return rows;
}

}  // namespace

Corpus Corpus::load(const fs::path& dir) {
  Corpus c;
  json manifest;
  {
    auto in = open_input(dir / "manifest.json");
    manifest = json::parse(in);
  }
  if (manifest.value("format", "") != "alstp-corpus") throw Error("not a corpus directory: " + dir.string());
  c.options.seed = manifest.at("seed").get<std::uint64_t>();
  c.options.min_user_interactions = manifest.at("min_user_interactions").get<std::size_t>();
  c.options.min_product_interactions = manifest.at("min_product_interactions").get<std::size_t>();
  c.options.min_word_freq = manifest.at("min_word_freq").get<std::size_t>();
  const auto& counts = manifest.at("counts");
  c.counts.raw_reviews = counts.at("raw_reviews").get<std::size_t>();
  c.counts.products_without_query = counts.at("products_without_query").get<std::size_t>();
  c.counts.dropped_users = counts.at("dropped_users").get<std::size_t>();
  c.counts.filter_rounds = counts.at("filter_rounds").get<std::size_t>();

  for (auto& row : read_tsv(dir / "queries.tsv", 2)) {
    if (std::stoul(row[0]) != c.queries.size()) throw Error("queries.tsv ids are not dense");
    c.queries.push_back(row[1]);
  }
  for (auto& row : read_tsv(dir / "vocab.tsv", 2)) c.vocab.emplace_back(row[0], std::stoull(row[1]));

  json split;
  {
    auto in = open_input(dir / "split.json");
    split = json::parse(in);
  }
  for (const auto& u : split.at("users")) {
    c.users.push_back(u.at("user_id").get<std::string>());
    c.splits.push_back({u.at("begin").get<std::size_t>(), u.at("valid").get<std::size_t>(),
                        u.at("test").get<std::size_t>(), u.at("end").get<std::size_t>()});
  }

  auto rows = read_tsv(dir / "interactions.tsv", 4);
  std::set<std::string> product_set;
  for (const auto& r : rows) product_set.insert(r[1]);
  c.products.assign(product_set.begin(), product_set.end());
  std::unordered_map<std::string, std::uint32_t> user_index, product_index;
  for (std::size_t u = 0; u < c.users.size(); ++u) user_index[c.users[u]] = static_cast<std::uint32_t>(u);
  for (std::size_t p = 0; p < c.products.size(); ++p) product_index[c.products[p]] = static_cast<std::uint32_t>(p);
  for (const auto& r : rows) {
    auto u = user_index.find(r[0]);
    if (u == user_index.end()) throw Error("interactions.tsv names unknown user " + r[0]);
    c.interactions.push_back({u->second, product_index.at(r[1]), static_cast<std::uint32_t>(std::stoul(r[2])),
                              std::stoll(r[3])});
  }
  if (c.splits.empty() || c.splits.back().end != c.interactions.size()) {
    throw Error("split.json does not cover interactions.tsv");
  }
  c.review_tokens.resize(c.interactions.size());
  for (auto& r : read_tsv(dir / "train_reviews.tsv", 5)) {
    c.review_tokens.at(std::stoul(r[0])) = text::tokenize(r[4]);
  }
  return c;
}

}  // namespace alstp::corpus
