#include "alstp/pvdm.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "alstp/archive.hpp"
#include "alstp/tensor.hpp"
#include "alstp/text.hpp"

namespace alstp::embed {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::uint64_t> counts)
    : words_(std::move(words)), counts_(std::move(counts)) {
  if (words_.size() != counts_.size()) throw Error("vocabulary: words and counts differ in length");
  for (std::uint32_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) throw Error("vocabulary: duplicate word " + words_[i]);
  }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view w) const {
  auto it = index_.find(std::string(w));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (auto id = find(t)) ids.push_back(*id);
  }
  return ids;
}

NegativeSampler::NegativeSampler(std::span<const std::uint64_t> counts, double power) {
  if (counts.empty()) throw Error("negative sampler needs a nonempty vocabulary");
  cumulative_.resize(counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    total += std::pow(static_cast<double>(counts[i]), power);
    cumulative_[i] = total;
  }
  if (!(total > 0.0)) throw Error("negative sampler: all counts are zero");
  for (auto& c : cumulative_) c /= total;
  cumulative_.back() = 1.0;
}

std::uint32_t NegativeSampler::sample(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<std::uint32_t>(it - cumulative_.begin());
}

double NegativeSampler::probability(std::uint32_t id) const {
  return cumulative_.at(id) - (id ? cumulative_[id - 1] : 0.0);
}

std::optional<std::size_t> EmbeddingTable::find_doc(DocKind kind, std::string_view key) const {
  for (std::size_t i = 0; i < doc_keys.size(); ++i) {
    if (doc_kinds[i] == kind && doc_keys[i] == key) return i;
  }
  return std::nullopt;
}

std::uint64_t EmbeddingTable::checksum() const {
  std::string bytes;
  for (const auto* v : {&doc_vectors, &word_vectors, &output_vectors}) {
    bytes.append(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(float));
  }
  return text::fnv1a(bytes);
}

namespace {

void init_rows(std::vector<float>& out, std::size_t rows, std::size_t dim, Rng& rng) {
  std::uniform_real_distribution<float> u(-0.5f / dim, 0.5f / dim);
  out.resize(rows * dim);
  for (auto& v : out) v = u(rng);
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct SharedVectors {
  const float* words;
  const float* outputs;
  float* words_out;  // null when frozen
  float* outputs_out;
};

// One PV-DM prediction: average the doc vector with the context words and
// predict the center word against sampled negatives. Returns the loss.
double fit_position(float* doc, std::span<const std::uint32_t> tokens, std::size_t pos, const PvdmConfig& cfg,
                    const SharedVectors& shared, const NegativeSampler& sampler, double lr, Rng& rng,
                    std::vector<float>& h, std::vector<float>& neu, std::vector<std::uint32_t>& ctx) {
  const std::size_t dim = cfg.dim;
  const std::size_t lo = pos >= cfg.window ? pos - cfg.window : 0;
  const std::size_t hi = std::min(tokens.size(), pos + cfg.window + 1);
  ctx.clear();
  for (std::size_t j = lo; j < hi; ++j) {
    if (j != pos) ctx.push_back(tokens[j]);
  }
  std::copy(doc, doc + dim, h.begin());
  for (auto w : ctx) {
    const float* wv = shared.words + static_cast<std::size_t>(w) * dim;
    for (std::size_t d = 0; d < dim; ++d) h[d] += wv[d];
  }
  const float inv = 1.0f / static_cast<float>(1 + ctx.size());
  for (auto& v : h) v *= inv;
  std::fill(neu.begin(), neu.end(), 0.0f);

  double loss = 0.0;
  const std::uint32_t center = tokens[pos];
  for (std::size_t s = 0; s <= cfg.negatives; ++s) {
    std::uint32_t target = center;
    double label = 1.0;
    if (s > 0) {
      target = sampler.sample(rng);
      if (target == center) continue;
      label = 0.0;
    }
    const float* ov = shared.outputs + static_cast<std::size_t>(target) * dim;
    double f = 0.0;
    for (std::size_t d = 0; d < dim; ++d) f += static_cast<double>(h[d]) * ov[d];
    const double p = sigmoid(f);
    loss -= label > 0 ? std::log(std::max(p, 1e-12)) : std::log(std::max(1.0 - p, 1e-12));
    const float g = static_cast<float>((label - p) * lr);
    for (std::size_t d = 0; d < dim; ++d) neu[d] += g * ov[d];
    if (shared.outputs_out) {
      float* o = shared.outputs_out + static_cast<std::size_t>(target) * dim;
      for (std::size_t d = 0; d < dim; ++d) o[d] += g * h[d];
    }
  }
  // word2vec convention: the averaged-input gradient is applied to every input unscaled.
  for (std::size_t d = 0; d < dim; ++d) doc[d] += neu[d];
  if (shared.words_out) {
    for (auto w : ctx) {
      float* wv = shared.words_out + static_cast<std::size_t>(w) * dim;
      for (std::size_t d = 0; d < dim; ++d) wv[d] += neu[d];
    }
  }
  return loss;
}

}  // namespace

EmbeddingTable init_pvdm(const std::vector<Document>& docs, Vocabulary vocab, const PvdmConfig& config) {
  if (config.dim == 0) throw Error("pvdm: dimension must be positive");
  if (vocab.size() == 0) throw Error("pvdm: empty vocabulary");
  EmbeddingTable t;
  t.config = config;
  t.vocab = std::move(vocab);
  for (const auto& d : docs) {
    if (d.tokens.empty()) throw Error("pvdm: document " + d.key + " has no in-vocabulary tokens");
    for (auto id : d.tokens) {
      if (id >= t.vocab.size()) throw Error("pvdm: token id out of range in document " + d.key);
    }
    t.doc_kinds.push_back(d.kind);
    t.doc_keys.push_back(d.key);
  }
  Rng rng(derive_seed(config.seed, 0x50564400ull));
  init_rows(t.word_vectors, t.vocab.size(), config.dim, rng);
  t.doc_vectors.resize(docs.size() * config.dim);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Rng doc_rng(derive_seed(config.seed, text::fnv1a(docs[i].key) ^ static_cast<std::uint64_t>(docs[i].kind)));
    std::vector<float> row;
    init_rows(row, 1, config.dim, doc_rng);
    std::copy(row.begin(), row.end(), t.doc_vectors.begin() + static_cast<std::ptrdiff_t>(i * config.dim));
  }
  t.output_vectors.assign(t.vocab.size() * config.dim, 0.0f);
  return t;
}

EmbeddingTable train_pvdm(const std::vector<Document>& docs, Vocabulary vocab, const PvdmConfig& config,
                          PvdmLog* log) {
  auto t = init_pvdm(docs, std::move(vocab), config);
  if (config.epochs == 0) return t;
  NegativeSampler sampler(t.vocab.counts());
  Rng rng(derive_seed(config.seed, 0x545241494eull));

  std::size_t total_tokens = 0;
  for (const auto& d : docs) total_tokens += d.tokens.size();
  const double total_steps = static_cast<double>(total_tokens * config.epochs);
  std::size_t step = 0;

  std::vector<float> h(config.dim), neu(config.dim);
  std::vector<std::uint32_t> ctx;
  SharedVectors shared{t.word_vectors.data(), t.output_vectors.data(), t.word_vectors.data(),
                       t.output_vectors.data()};
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    std::size_t count = 0;
    for (auto di : order) {
      float* dv = t.doc_vectors.data() + di * config.dim;
      const auto& tokens = docs[di].tokens;
      for (std::size_t pos = 0; pos < tokens.size(); ++pos, ++step) {
        const double lr = std::max(config.min_lr, config.lr * (1.0 - step / total_steps));
        loss += fit_position(dv, tokens, pos, config, shared, sampler, lr, rng, h, neu, ctx);
        ++count;
      }
    }
    const double mean = count ? loss / count : 0.0;
    if (log) log->epoch_loss.push_back(mean);
    spdlog::debug("pvdm epoch {} loss {:.5f}", epoch, mean);
  }
  return t;
}

std::vector<float> infer_vector(const EmbeddingTable& table, std::span<const std::uint32_t> tokens,
                                std::size_t epochs, std::uint64_t seed) {
  if (tokens.empty()) throw Error("infer_vector: no in-vocabulary tokens");
  const auto& cfg = table.config;
  Rng rng(seed);
  std::vector<float> doc;
  init_rows(doc, 1, cfg.dim, rng);
  NegativeSampler sampler(table.vocab.counts());
  SharedVectors shared{table.word_vectors.data(), table.output_vectors.data(), nullptr, nullptr};
  std::vector<float> h(cfg.dim), neu(cfg.dim);
  std::vector<std::uint32_t> ctx;
  const double total = static_cast<double>(tokens.size() * std::max<std::size_t>(epochs, 1));
  std::size_t step = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t pos = 0; pos < tokens.size(); ++pos, ++step) {
      const double lr = std::max(cfg.min_lr, cfg.lr * (1.0 - step / total));
      fit_position(doc.data(), tokens, pos, cfg, shared, sampler, lr, rng, h, neu, ctx);
    }
  }
  return doc;
}

std::vector<float> infer_query_vector(const EmbeddingTable& table, std::string_view query_text, std::size_t epochs) {
  if (auto row = table.find_doc(DocKind::Query, query_text)) {
    auto v = table.doc(*row);
    return {v.begin(), v.end()};
  }
  auto ids = table.vocab.encode(text::tokenize(query_text));
  if (ids.empty()) throw Error("query \"" + std::string(query_text) + "\" has no in-vocabulary tokens");
  return infer_vector(table, ids, epochs, derive_seed(table.config.seed, text::fnv1a(query_text)));
}

void EmbeddingTable::save(const std::filesystem::path& dir) const {
  TensorArchive a;
  a.add("doc_vectors", {num_docs(), dim()}, doc_vectors);
  a.add("word_vectors", {vocab.size(), dim()}, word_vectors);
  a.add("output_vectors", {vocab.size(), dim()}, output_vectors);
  json docs = json::array();
  for (std::size_t i = 0; i < num_docs(); ++i) {
    docs.push_back({doc_kinds[i] == DocKind::Product ? "product" : "query", doc_keys[i]});
  }
  json words = json::array();
  for (std::uint32_t i = 0; i < vocab.size(); ++i) words.push_back({vocab.word(i), vocab.counts()[i]});
  a.meta = {{"k", config.dim},
            {"seed", config.seed},
            {"hyperparameters",
             {{"window", config.window},
              {"negatives", config.negatives},
              {"epochs", config.epochs},
              {"infer_epochs", config.infer_epochs},
              {"lr", config.lr},
              {"min_lr", config.min_lr}}},
            {"doc_rows", docs},
            {"word_rows", words}};
  a.save(dir, "embeddings");
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& dir) {
  auto a = TensorArchive::load(dir, "embeddings");
  EmbeddingTable t;
  t.config.dim = a.meta.at("k").get<std::size_t>();
  t.config.seed = a.meta.at("seed").get<std::uint64_t>();
  const auto& hp = a.meta.at("hyperparameters");
  t.config.window = hp.at("window").get<std::size_t>();
  t.config.negatives = hp.at("negatives").get<std::size_t>();
  t.config.epochs = hp.at("epochs").get<std::size_t>();
  t.config.infer_epochs = hp.at("infer_epochs").get<std::size_t>();
  t.config.lr = hp.at("lr").get<double>();
  t.config.min_lr = hp.at("min_lr").get<double>();
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  for (const auto& w : a.meta.at("word_rows")) {
    words.push_back(w.at(0).get<std::string>());
    counts.push_back(w.at(1).get<std::uint64_t>());
  }
  t.vocab = Vocabulary(std::move(words), std::move(counts));
  for (const auto& d : a.meta.at("doc_rows")) {
    t.doc_kinds.push_back(d.at(0).get<std::string>() == "product" ? DocKind::Product : DocKind::Query);
    t.doc_keys.push_back(d.at(1).get<std::string>());
  }
  t.doc_vectors = a.at("doc_vectors").values;
  t.word_vectors = a.at("word_vectors").values;
  t.output_vectors = a.at("output_vectors").values;
  if (t.doc_vectors.size() != t.num_docs() * t.dim()) throw Error("embeddings: doc rows do not match manifest");
  return t;
}

}  // namespace alstp::embed
