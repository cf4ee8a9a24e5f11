#include "alstp/dataset.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <unordered_map>

namespace alstp {

embed::Vocabulary corpus_vocabulary(const corpus::Corpus& corpus) {
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  for (const auto& [w, n] : corpus.vocab) {
    words.push_back(w);
    counts.push_back(n);
  }
  return embed::Vocabulary(std::move(words), std::move(counts));
}

std::vector<embed::Document> corpus_documents(const corpus::Corpus& corpus, const embed::Vocabulary& vocab) {
  std::vector<embed::Document> docs;
  auto product_docs = corpus.product_documents();
  std::vector<std::uint32_t> product_query(corpus.products.size(), 0);
  for (const auto& it : corpus.interactions) product_query[it.product] = it.query;
  std::size_t fallbacks = 0;
  for (std::size_t p = 0; p < corpus.products.size(); ++p) {
    auto ids = vocab.encode(product_docs[p]);
    if (ids.empty()) {
      ids = vocab.encode(corpus.query_tokens(product_query[p]));
      ++fallbacks;
    }
    docs.push_back({embed::DocKind::Product, corpus.products[p], std::move(ids)});
  }
  if (fallbacks) spdlog::warn("{} product(s) have no training reviews; using their query text", fallbacks);
  for (std::size_t q = 0; q < corpus.queries.size(); ++q) {
    auto ids = vocab.encode(corpus.query_tokens(static_cast<std::uint32_t>(q)));
    if (ids.empty()) throw Error("query \"" + corpus.queries[q] + "\" has no in-vocabulary tokens");
    docs.push_back({embed::DocKind::Query, corpus.queries[q], std::move(ids)});
  }
  return docs;
}

std::vector<float> model_input(std::span<const float> raw) {
  double norm = 0.0;
  for (auto x : raw) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("embedding vector has zero or non-finite norm");
  std::vector<float> out;
  out.reserve(raw.size());
  for (auto x : raw) out.push_back(static_cast<float>(x / norm));
  return out;
}

Dataset make_dataset(const corpus::Corpus& corpus, const embed::EmbeddingTable& table) {
  std::unordered_map<std::string, std::size_t> product_rows, query_rows;
  for (std::size_t i = 0; i < table.num_docs(); ++i) {
    (table.doc_kinds[i] == embed::DocKind::Product ? product_rows : query_rows).emplace(table.doc_keys[i], i);
  }
  Dataset ds;
  ds.inputs.dim = table.dim();
  auto append = [&](std::vector<float>& dst, const std::unordered_map<std::string, std::size_t>& rows,
                    const std::string& key, const char* what) {
    auto it = rows.find(key);
    if (it == rows.end()) throw Error(std::string("embeddings have no vector for ") + what + " " + key);
    try {
      auto v = model_input(table.doc(it->second));
      dst.insert(dst.end(), v.begin(), v.end());
    } catch (const Error&) {
      throw Error(std::string("zero embedding for ") + what + " " + key);
    }
  };
  for (const auto& p : corpus.products) append(ds.inputs.products, product_rows, p, "product");
  for (const auto& q : corpus.queries) append(ds.inputs.queries, query_rows, q, "query");

  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& s = corpus.splits[u];
    UserSequence seq;
    seq.user = static_cast<std::uint32_t>(u);
    for (const auto& it : corpus.user_interactions(u)) {
      seq.history.queries.push_back(it.query);
      seq.history.products.push_back(it.product);
    }
    seq.train_end = s.valid - s.begin;
    seq.valid = s.valid - s.begin;
    seq.test = s.test - s.begin;
    ds.users.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace alstp
