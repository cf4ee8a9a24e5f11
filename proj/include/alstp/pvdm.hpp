#pragma once

// Distributed-memory paragraph vectors (PV-DM) trained with negative sampling.
// Products and queries are documents in one shared space; word vectors are
// shared by all documents.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "alstp/rng.hpp"

namespace alstp::embed {

struct PvdmConfig {
  std::size_t dim = 256;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 20;
  std::size_t infer_epochs = 50;
  double lr = 0.025;
  double min_lr = 1e-4;
  std::uint64_t seed = 42;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::vector<std::uint64_t> counts);

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::uint32_t id) const { return words_.at(id); }
  std::span<const std::uint64_t> counts() const { return counts_; }
  std::optional<std::uint32_t> find(std::string_view w) const;
  // Drops out-of-vocabulary tokens.
  std::vector<std::uint32_t> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Draws word ids with probability proportional to count^power.
class NegativeSampler {
 public:
  explicit NegativeSampler(std::span<const std::uint64_t> counts, double power = 0.75);
  std::uint32_t sample(Rng& rng) const;
  double probability(std::uint32_t id) const;

 private:
  std::vector<double> cumulative_;
};

enum class DocKind { Product, Query };

struct Document {
  DocKind kind = DocKind::Product;
  std::string key;  // product id or query text
  std::vector<std::uint32_t> tokens;
};

struct EmbeddingTable {
  PvdmConfig config;
  Vocabulary vocab;
  std::vector<DocKind> doc_kinds;
  std::vector<std::string> doc_keys;
  std::vector<float> doc_vectors;     // [docs x dim]
  std::vector<float> word_vectors;    // [words x dim]
  std::vector<float> output_vectors;  // [words x dim], negative-sampling output layer

  std::size_t dim() const { return config.dim; }
  std::size_t num_docs() const { return doc_keys.size(); }
  std::span<const float> doc(std::size_t row) const {
    return std::span<const float>(doc_vectors).subspan(row * dim(), dim());
  }
  std::optional<std::size_t> find_doc(DocKind kind, std::string_view key) const;
  std::uint64_t checksum() const;

  // embeddings.bin + embeddings.json
  void save(const std::filesystem::path& dir) const;
  static EmbeddingTable load(const std::filesystem::path& dir);
};

struct PvdmLog {
  std::vector<double> epoch_loss;  // mean loss per prediction
};

// Table with every vector at its seeded initial value (what zero epochs returns).
EmbeddingTable init_pvdm(const std::vector<Document>& docs, Vocabulary vocab, const PvdmConfig& config);

EmbeddingTable train_pvdm(const std::vector<Document>& docs, Vocabulary vocab, const PvdmConfig& config,
                          PvdmLog* log = nullptr);

// Fits a fresh document vector against frozen word/output vectors.
std::vector<float> infer_vector(const EmbeddingTable& table, std::span<const std::uint32_t> tokens,
                                std::size_t epochs, std::uint64_t seed);

// Stored vector for queries seen in training, otherwise inference seeded by the text.
std::vector<float> infer_query_vector(const EmbeddingTable& table, std::string_view query_text,
                                      std::size_t epochs);

}  // namespace alstp::embed
