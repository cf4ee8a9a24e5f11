#pragma once

// On-disk stages: preprocess -> embed -> train -> eval, plus baselines,
// significance, search and attention export. Every stage writes its artifacts
// into one directory together with a run manifest (run.json).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "alstp/baselines.hpp"
#include "alstp/config.hpp"
#include "alstp/corpus.hpp"
#include "alstp/dataset.hpp"
#include "alstp/metrics.hpp"
#include "alstp/pvdm.hpp"
#include "alstp/synth.hpp"
#include "alstp/trainer.hpp"

namespace alstp::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kRunManifest = "run.json";

// Git blob id (sha1 of "blob <size>\0" + content).
std::string git_blob_hash(const fs::path& file);

// Hash of every regular file under `path` (or of `path` itself), keyed by relative name.
nlohmann::json content_hashes(const fs::path& path);

class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void config(nlohmann::json snapshot) { config_ = std::move(snapshot); }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const std::string& role, const fs::path& path);
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  // Writes run.json into `out_dir`, hashing everything already present there.
  void write(const fs::path& out_dir) const;

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json extra_ = nlohmann::json::object();
  std::chrono::steady_clock::time_point start_;
};

// --- stages -----------------------------------------------------------------

corpus::Corpus preprocess(const fs::path& reviews, const fs::path& meta, const fs::path& out_dir,
                          const corpus::CorpusOptions& options);

synth::SynthCorpus synthesize(const synth::SynthOptions& options, const fs::path& out_dir);

embed::EmbeddingTable embed_corpus(const fs::path& corpus_dir, const fs::path& out_dir,
                                   const embed::PvdmConfig& config);

struct Checkpoint {
  model::Model<float> model;
  std::vector<std::vector<float>> long_term;  // per corpus user
  std::size_t best_epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::vector<std::string>& users, const fs::path& dir);
Checkpoint load_checkpoint(const fs::path& dir);

struct TrainOptions {
  Config config;
  std::vector<double> lr_grid;  // when non-empty, one run per lr; best validation NDCG wins
  std::size_t threads = 1;
};

Checkpoint train_model(const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& out_dir,
                       const TrainOptions& options);

// In-memory lr sweep; returns the checkpoint with the best validation NDCG and
// appends a (lr, ndcg) row per run to `sweep` when given.
train::TrainResult train_with_grid(const Config& config, const Dataset& data, const std::vector<double>& lr_grid,
                                   std::size_t threads, nlohmann::json* sweep = nullptr);

eval::Split parse_split(const std::string& name);
std::string split_name(eval::Split s);

// metrics.json + instances.jsonl
void write_eval(const eval::EvalResult& result, const std::string& model_name, const std::string& dataset,
                eval::Split split, std::size_t cutoff, const fs::path& out_dir);
eval::EvalResult read_instances(const fs::path& dir, std::size_t cutoff = eval::kDefaultCutoff);

eval::EvalResult evaluate_model(const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir,
                                const fs::path& out_dir, eval::Split split, std::size_t threads);

struct BaselineOptions {
  std::vector<double> mu_grid{2000.0, 6000.0, 10000.0};
  std::vector<double> lambda_grid;  // UQL only; empty = {0, 0.2, ..., 1}
  std::size_t profile_min_count = 50;
  std::size_t cutoff = eval::kDefaultCutoff;
  eval::Split split = eval::Split::Test;
};

// Tunes on validation, reports `split`. `uql` selects the user-model variant.
eval::EvalResult run_baseline(const fs::path& corpus_dir, const fs::path& out_dir, bool uql,
                              const BaselineOptions& options);

// Paired t-tests for hr/mrr/ndcg between two eval directories.
nlohmann::json significance(const fs::path& a_dir, const fs::path& b_dir, const fs::path& out_file);

// attn.jsonl, one record per user instance.
std::vector<eval::AttentionRecord> attention_dump(const fs::path& corpus_dir, const fs::path& embed_dir,
                                                  const fs::path& model_dir, const fs::path& out_file,
                                                  eval::Split split);

struct SearchHit {
  std::size_t rank = 0;
  std::string product;
  double score = 0.0;
};

struct SearchResult {
  bool cold_start = false;
  std::vector<SearchHit> hits;
};

SearchResult search(const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir,
                    const std::string& user_id, const std::string& query_text, std::size_t top = 20);

}  // namespace alstp::pipeline
