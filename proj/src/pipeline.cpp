#include "alstp/pipeline.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include "alstp/archive.hpp"

namespace alstp::pipeline {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw Error(std::string(what) + " directory not found: " + dir.string());
}

std::string dataset_name(const fs::path& corpus_dir) {
  auto p = fs::absolute(corpus_dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

struct Loaded {
  corpus::Corpus corpus;
  embed::EmbeddingTable table;
  Dataset data;
};

Loaded load_inputs(const fs::path& corpus_dir, const fs::path& embed_dir) {
  require_dir(corpus_dir, "corpus");
  require_dir(embed_dir, "embedding");
  Loaded l{corpus::Corpus::load(corpus_dir), embed::EmbeddingTable::load(embed_dir), {}};
  l.data = make_dataset(l.corpus, l.table);
  return l;
}

nlohmann::json epoch_json(const train::EpochLog& e, double lr) {
  return {{"epoch", e.epoch},
          {"lr", lr},
          {"mean_loss", e.mean_loss},
          {"steps", e.steps},
          {"max_applied_norm", e.max_applied_norm},
          {"validation", eval::to_json(e.validation)},
          {"wall_seconds", e.wall_seconds}};
}

}  // namespace

std::string git_blob_hash(const fs::path& file) {
  const auto body = read_file(file);
  const std::string header = "blob " + std::to_string(body.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  auto* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) &&
                  EVP_DigestUpdate(ctx, body.data(), body.size()) && EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha1 failed for " + file.string());
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

nlohmann::json content_hashes(const fs::path& path) {
  nlohmann::json out = nlohmann::json::object();
  if (fs::is_regular_file(path)) {
    out[path.filename().string()] = git_blob_hash(path);
    return out;
  }
  if (!fs::is_directory(path)) throw Error("no such file or directory: " + path.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file() && e.path().filename() != kRunManifest) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out[fs::relative(f, path).generic_string()] = git_blob_hash(f);
  return out;
}

RunManifest::RunManifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

void RunManifest::input(const std::string& role, const fs::path& path) {
  inputs_.push_back({{"role", role}, {"path", path.string()}, {"hashes", content_hashes(path)}});
}

void RunManifest::write(const fs::path& out_dir) const {
  nlohmann::json j{{"command", command_},
                   {"seed", seed_},
                   {"config", config_},
                   {"inputs", inputs_},
                   {"output", out_dir.string()},
                   {"outputs", content_hashes(out_dir)},
                   {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()}};
  for (auto& [k, v] : extra_.items()) j[k] = v;
  write_json(out_dir / kRunManifest, j);
}

corpus::Corpus preprocess(const fs::path& reviews, const fs::path& meta, const fs::path& out_dir,
                          const corpus::CorpusOptions& options) {
  for (const auto& p : {reviews, meta}) {
    if (!fs::is_regular_file(p)) throw Error("input file not found: " + p.string());
  }
  RunManifest run("preprocess");
  corpus::ParseStats rs, ms;
  auto raw = corpus::parse_reviews(reviews, &rs);
  auto products = corpus::parse_meta(meta, &ms);
  spdlog::info("reviews: {} parsed, {} skipped; meta: {} parsed, {} skipped", rs.parsed, rs.skipped, ms.parsed,
               ms.skipped);
  auto c = corpus::build_corpus(raw, products, options);
  fs::create_directories(out_dir);
  c.save(out_dir);
  run.seed(options.seed);
  run.config({{"min_user_interactions", options.min_user_interactions},
              {"min_product_interactions", options.min_product_interactions},
              {"min_word_freq", options.min_word_freq}});
  run.input("reviews", reviews);
  run.input("meta", meta);
  run.set("parse", {{"reviews", {{"lines", rs.lines}, {"parsed", rs.parsed}, {"skipped", rs.skipped}}},
                    {"meta", {{"lines", ms.lines}, {"parsed", ms.parsed}, {"skipped", ms.skipped}}}});
  run.write(out_dir);
  spdlog::info("corpus: {} users, {} products, {} queries, {} interactions", c.users.size(), c.products.size(),
               c.queries.size(), c.interactions.size());
  return c;
}

synth::SynthCorpus synthesize(const synth::SynthOptions& options, const fs::path& out_dir) {
  RunManifest run("synth");
  auto s = synth::generate(options);
  synth::write(s, out_dir);
  run.seed(options.seed);
  run.config({{"profile", synth::profile_name(options.profile)},
              {"users", options.users},
              {"purchases", options.purchases},
              {"session_switch", options.session_switch},
              {"style_loyalty", options.style_loyalty}});
  run.write(out_dir);
  return s;
}

embed::EmbeddingTable embed_corpus(const fs::path& corpus_dir, const fs::path& out_dir,
                                   const embed::PvdmConfig& config) {
  require_dir(corpus_dir, "corpus");
  RunManifest run("embed");
  auto c = corpus::Corpus::load(corpus_dir);
  auto vocab = corpus_vocabulary(c);
  auto docs = corpus_documents(c, vocab);
  embed::PvdmLog log;
  auto table = embed::train_pvdm(docs, std::move(vocab), config, &log);
  fs::create_directories(out_dir);
  table.save(out_dir);
  {
    std::ofstream os(out_dir / "pvdm_log.jsonl", std::ios::binary);
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
      os << nlohmann::json{{"epoch", e + 1}, {"mean_loss", log.epoch_loss[e]}}.dump() << '\n';
    }
  }
  run.seed(config.seed);
  run.config({{"dim", config.dim},
              {"window", config.window},
              {"negatives", config.negatives},
              {"epochs", config.epochs},
              {"infer_epochs", config.infer_epochs},
              {"lr", config.lr},
              {"min_lr", config.min_lr}});
  run.input("corpus", corpus_dir);
  run.write(out_dir);
  return table;
}

void save_checkpoint(const Checkpoint& ckpt, const std::vector<std::string>& users, const fs::path& dir) {
  TensorArchive ar;
  ckpt.model.params().for_each([&](const std::string& name, const nn::Tensor<float>& t) {
    ar.add(name, t.shape(), {t.values().begin(), t.values().end()});
  });
  const std::size_t k = ckpt.model.config().k;
  if (!ckpt.long_term.empty()) {
    std::vector<float> g;
    for (const auto& row : ckpt.long_term) g.insert(g.end(), row.begin(), row.end());
    ar.add("user_g", {ckpt.long_term.size(), k}, std::move(g));
  }
  ar.meta = {{"config", ckpt.model.config().to_json()}, {"best_epoch", ckpt.best_epoch}, {"users", users}};
  fs::create_directories(dir);
  ar.save(dir, "model");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  require_dir(dir, "model");
  auto ar = TensorArchive::load(dir, "model");
  auto cfg = Config::from_json(ar.meta.at("config"));
  auto params = model::Params<float>::zeros(cfg);
  params.for_each([&](const std::string& name, nn::Tensor<float>& t) {
    const auto& src = ar.at(name);
    if (src.shape != t.shape()) {
      throw Error("checkpoint tensor " + name + " has shape " + nn::shape_str(src.shape) + ", config implies " +
                  nn::shape_str(t.shape()));
    }
    std::copy(src.values.begin(), src.values.end(), t.mutable_values().begin());
  });
  Checkpoint ck{model::Model<float>(cfg, std::move(params)), {}, ar.meta.value("best_epoch", std::size_t{0})};
  if (ar.contains("user_g")) {
    const auto& g = ar.at("user_g");
    for (std::size_t u = 0; u < g.shape.at(0); ++u) {
      ck.long_term.emplace_back(g.values.begin() + static_cast<std::ptrdiff_t>(u * cfg.k),
                                g.values.begin() + static_cast<std::ptrdiff_t>((u + 1) * cfg.k));
    }
  }
  return ck;
}

train::TrainResult train_with_grid(const Config& config, const Dataset& data, const std::vector<double>& lr_grid,
                                   std::size_t threads, nlohmann::json* sweep) {
  std::vector<double> grid = lr_grid.empty() ? std::vector<double>{config.lr} : lr_grid;
  std::optional<train::TrainResult> best;
  double best_ndcg = -1.0;
  for (double lr : grid) {
    Config cfg = config;
    cfg.lr = lr;
    train::Trainer trainer(cfg, data);
    trainer.eval_threads = threads;
    auto result = trainer.train();
    const double ndcg = result.best_epoch ? result.log[result.best_epoch - 1].validation.ndcg : 0.0;
    if (grid.size() > 1) spdlog::info("lr {:g}: best epoch {}, validation NDCG {:.4f}", lr, result.best_epoch, ndcg);
    if (sweep) sweep->push_back({{"lr", lr}, {"best_epoch", result.best_epoch}, {"validation_ndcg", ndcg}});
    if (!best || ndcg > best_ndcg) {
      best_ndcg = ndcg;
      best = std::move(result);
    }
  }
  return std::move(*best);
}

Checkpoint train_model(const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& out_dir,
                       const TrainOptions& options) {
  RunManifest run("train");
  auto in = load_inputs(corpus_dir, embed_dir);
  nlohmann::json sweep = nlohmann::json::array();
  auto result = train_with_grid(options.config, in.data, options.lr_grid, options.threads, &sweep);
  Checkpoint ck{std::move(result.model), std::move(result.long_term), result.best_epoch};
  save_checkpoint(ck, in.corpus.users, out_dir);
  {
    std::ofstream os(out_dir / "train_log.jsonl", std::ios::binary);
    for (const auto& e : result.log) os << epoch_json(e, ck.model.config().lr).dump() << '\n';
  }
  run.seed(options.config.seed);
  run.config(ck.model.config().to_json());
  run.input("corpus", corpus_dir);
  run.input("embeddings", embed_dir);
  if (sweep.size() > 1) run.set("lr_sweep", sweep);
  run.set("best_epoch", ck.best_epoch);
  run.write(out_dir);
  return ck;
}

eval::Split parse_split(const std::string& name) {
  if (name == "test") return eval::Split::Test;
  if (name == "validation" || name == "valid") return eval::Split::Validation;
  throw Error("unknown split '" + name + "' (expected test or validation)");
}

std::string split_name(eval::Split s) { return s == eval::Split::Test ? "test" : "validation"; }

void write_eval(const eval::EvalResult& result, const std::string& model_name, const std::string& dataset,
                eval::Split split, std::size_t cutoff, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto m = eval::to_json(result.metrics);
  m["model"] = model_name;
  m["dataset"] = dataset;
  m["split"] = split_name(split);
  m["cutoff"] = cutoff;
  write_json(out_dir / "metrics.json", m);
  std::ofstream os(out_dir / "instances.jsonl", std::ios::binary);
  for (const auto& i : result.instances) {
    os << nlohmann::json{{"user", i.user}, {"target", i.target}, {"product", i.product}, {"rank", i.rank}}.dump()
       << '\n';
  }
}

eval::EvalResult read_instances(const fs::path& dir, std::size_t cutoff) {
  std::ifstream in(dir / "instances.jsonl");
  if (!in) throw Error("cannot read " + (dir / "instances.jsonl").string());
  eval::EvalResult r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    r.instances.push_back({j.at("user").get<std::uint32_t>(), j.at("target").get<std::size_t>(),
                           j.at("product").get<std::uint32_t>(), j.at("rank").get<std::size_t>()});
  }
  auto ranks = r.ranks();
  r.metrics = eval::aggregate(ranks, cutoff);
  return r;
}

eval::EvalResult evaluate_model(const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir,
                                const fs::path& out_dir, eval::Split split, std::size_t threads) {
  RunManifest run("eval");
  auto in = load_inputs(corpus_dir, embed_dir);
  auto ck = load_checkpoint(model_dir);
  auto result = eval::evaluate(ck.model, in.data, split, threads);
  const auto& cfg = ck.model.config();
  write_eval(result, std::string(variant_name(cfg.variant)), dataset_name(corpus_dir), split, cfg.cutoff, out_dir);
  run.seed(cfg.seed);
  run.config(cfg.to_json());
  run.input("corpus", corpus_dir);
  run.input("embeddings", embed_dir);
  run.input("model", model_dir);
  run.write(out_dir);
  spdlog::info("{} {}: HR {:.4f} MRR {:.4f} NDCG {:.4f} over {} instances", variant_name(cfg.variant),
               split_name(split), result.metrics.hr, result.metrics.mrr, result.metrics.ndcg,
               result.metrics.instances);
  return result;
}

eval::EvalResult run_baseline(const fs::path& corpus_dir, const fs::path& out_dir, bool uql,
                              const BaselineOptions& options) {
  require_dir(corpus_dir, "corpus");
  RunManifest run(uql ? "baseline-uql" : "baseline-ql");
  auto c = corpus::Corpus::load(corpus_dir);
  baselines::LanguageModelIndex index(c.product_documents());

  std::size_t oov = 0;
  for (const auto& s : c.splits) {
    for (auto row : {s.valid, s.test}) {
      for (const auto& w : c.query_tokens(c.interactions[row].query)) oov += index.collection_probability(w) == 0.0;
    }
  }
  if (oov) spdlog::warn("{} query word occurrence(s) are absent from the review collection and are skipped", oov);

  std::vector<double> lambdas = options.lambda_grid;
  if (!uql) lambdas = {1.0};
  else if (lambdas.empty()) lambdas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const auto profiles = uql ? baselines::user_word_profiles(c, options.profile_min_count)
                            : std::vector<std::vector<std::string>>{};

  auto run_one = [&](const baselines::BaselineConfig& cfg, eval::Split split) {
    return uql ? baselines::evaluate_uql(c, index, profiles, split, cfg) : baselines::evaluate_ql(c, index, split, cfg);
  };

  nlohmann::json grid = nlohmann::json::array();
  baselines::BaselineConfig best;
  best.cutoff = options.cutoff;
  best.profile_min_count = options.profile_min_count;
  double best_ndcg = -1.0;
  for (double mu : options.mu_grid) {
    for (double lambda : lambdas) {
      baselines::BaselineConfig cfg = best;
      cfg.mu = mu;
      cfg.lambda = lambda;
      const auto r = run_one(cfg, eval::Split::Validation);
      grid.push_back({{"mu", mu}, {"lambda", lambda}, {"validation", eval::to_json(r.metrics)}});
      if (r.metrics.ndcg > best_ndcg) {
        best_ndcg = r.metrics.ndcg;
        best.mu = mu;
        best.lambda = lambda;
      }
    }
  }
  auto result = run_one(best, options.split);
  write_eval(result, uql ? "UQL" : "QL", dataset_name(corpus_dir), options.split, options.cutoff, out_dir);
  run.config({{"mu", best.mu}, {"lambda_mix", best.lambda}, {"profile_min_count", best.profile_min_count}});
  run.set("grid", grid);
  run.input("corpus", corpus_dir);
  run.write(out_dir);
  spdlog::info("{} (mu {:g}, lambda {:g}) {}: HR {:.4f} MRR {:.4f} NDCG {:.4f}", uql ? "UQL" : "QL", best.mu,
               best.lambda, split_name(options.split), result.metrics.hr, result.metrics.mrr, result.metrics.ndcg);
  return result;
}

nlohmann::json significance(const fs::path& a_dir, const fs::path& b_dir, const fs::path& out_file) {
  const auto ma = read_json(a_dir / "metrics.json");
  const auto mb = read_json(b_dir / "metrics.json");
  const std::size_t cutoff = ma.value("cutoff", eval::kDefaultCutoff);
  if (mb.value("cutoff", eval::kDefaultCutoff) != cutoff) throw Error("significance: runs use different cutoffs");
  auto a = read_instances(a_dir, cutoff);
  auto b = read_instances(b_dir, cutoff);
  if (a.instances.size() != b.instances.size()) throw Error("significance: runs have different instance counts");
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    if (a.instances[i].user != b.instances[i].user || a.instances[i].target != b.instances[i].target) {
      throw Error("significance: instance " + std::to_string(i) + " differs between runs");
    }
  }
  nlohmann::json out{{"a", {{"model", ma.value("model", "")}, {"dir", a_dir.string()}}},
                     {"b", {{"model", mb.value("model", "")}, {"dir", b_dir.string()}}},
                     {"test", "paired two-sided t-test"},
                     {"n", a.instances.size()}};
  for (const char* metric : {"hr", "mrr", "ndcg"}) {
    const auto va = a.per_instance(metric, cutoff);
    const auto vb = b.per_instance(metric, cutoff);
    const auto t = eval::paired_ttest(va, vb);
    out["metrics"][metric] = {{"mean_a", ma.at(metric)}, {"mean_b", mb.at(metric)}, {"t", t.t},
                              {"p", t.p},                {"degenerate", t.degenerate}};
  }
  if (!out_file.empty()) {
    if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
    write_json(out_file, out);
  }
  return out;
}

std::vector<eval::AttentionRecord> attention_dump(const fs::path& corpus_dir, const fs::path& embed_dir,
                                                  const fs::path& model_dir, const fs::path& out_file,
                                                  eval::Split split) {
  auto in = load_inputs(corpus_dir, embed_dir);
  auto ck = load_checkpoint(model_dir);
  std::vector<eval::AttentionRecord> records;
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  std::ofstream os(out_file, std::ios::binary);
  if (!os) throw Error("cannot write " + out_file.string());
  for (std::size_t u = 0; u < in.data.users.size(); ++u) {
    auto rec = eval::dump_attention(ck.model, in.data, u, split);
    nlohmann::json j{{"user", in.corpus.users[rec.user]},
                     {"target", rec.target},
                     {"query", in.corpus.queries[rec.query]},
                     {"short_weights", rec.short_weights},
                     {"long_weights", rec.long_weights}};
    for (auto q : rec.previous_queries) j["previous_queries"].push_back(in.corpus.queries[q]);
    for (auto p : rec.previous_products) j["previous_products"].push_back(in.corpus.products[p]);
    os << j.dump() << '\n';
    records.push_back(std::move(rec));
  }
  return records;
}

SearchResult search(const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir,
                    const std::string& user_id, const std::string& query_text, std::size_t top) {
  auto in = load_inputs(corpus_dir, embed_dir);
  auto ck = load_checkpoint(model_dir);
  const auto& model = ck.model;
  const auto qvec = model_input(embed::infer_query_vector(in.table, query_text, in.table.config.infer_epochs));

  auto& inputs = in.data.inputs;
  const auto query_row = static_cast<std::uint32_t>(inputs.num_queries());
  inputs.queries.insert(inputs.queries.end(), qvec.begin(), qvec.end());

  SearchResult out;
  nn::Tape<float> tape(false);
  model::IntentTrace<float> trace;
  auto it = std::lower_bound(in.corpus.users.begin(), in.corpus.users.end(), user_id);
  const bool known = it != in.corpus.users.end() && *it == user_id;
  const std::size_t m = model.config().m;
  if (known && in.data.users[static_cast<std::size_t>(it - in.corpus.users.begin())].history.size() >= m) {
    auto history = in.data.users[static_cast<std::size_t>(it - in.corpus.users.begin())].history;
    // The new query is the next purchase; its product slot is never read.
    history.queries.push_back(query_row);
    history.products.push_back(0);
    const std::size_t target = history.size() - 1;
    auto state = model.initial_state();
    model.advance(state, inputs, history, target);
    trace = model.intent(tape, inputs, history, target, state.g);
  } else {
    if (known) spdlog::warn("user {} has fewer than m purchases; scoring without preferences", user_id);
    else spdlog::warn("unknown user {}; scoring without preferences", user_id);
    out.cold_start = true;
    trace = model.cold_intent(tape, qvec);
  }
  auto ranked = model.rank_catalog(trace.intent.values(), model.project_catalog(inputs));
  for (std::size_t i = 0; i < std::min(top, ranked.size()); ++i) {
    out.hits.push_back({i + 1, in.corpus.products[ranked[i].product], ranked[i].score});
  }
  return out;
}

}  // namespace alstp::pipeline
