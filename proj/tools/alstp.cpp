// alstp: command-line driver for the personalized product search pipeline.
//
// Hyperparameters come from built-in defaults, then an optional --config file
// (flat key = value), then explicit command-line flags, in that order.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "alstp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace alstp;

namespace {

using Settings = std::map<std::string, std::string>;

// Keys consumed by the CLI itself; everything else must be a model config key.
const std::set<std::string> kCliKeys = {
    "lr_grid",      "mu",           "lambda_mix",   "profile_min_count", "embed_window", "embed_negatives",
    "embed_epochs", "embed_infer_epochs", "embed_lr", "min_user_interactions", "min_product_interactions",
    "min_word_freq", "users",       "purchases",    "session_switch",    "style_loyalty"};

struct Flags {
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::map<std::string, std::string> storage;
};

std::string key_to_flag(std::string key) {
  for (auto& c : key) c = c == '_' ? '-' : c;
  return "--" + key;
}

void add_setting(CLI::App* cmd, Flags& flags, const std::string& key, const std::string& help) {
  auto* opt = cmd->add_option(key_to_flag(key), flags.storage[key], help);
  flags.options.emplace_back(opt, key);
}

template <typename T>
T parse_as(const Settings& s, const std::string& key, T fallback) {
  auto it = s.find(key);
  if (it == s.end()) return fallback;
  std::istringstream is(it->second);
  T v{};
  is >> v;
  if (!is || !is.eof()) throw Error("setting " + key + ": cannot parse \"" + it->second + "\"");
  return v;
}

std::vector<double> parse_list(const Settings& s, const std::string& key, std::vector<double> fallback) {
  auto it = s.find(key);
  if (it == s.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("setting " + key + ": cannot parse \"" + item + "\"");
    }
  }
  if (out.empty()) throw Error("setting " + key + " is empty");
  return out;
}

struct Context {
  std::string config_file;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  CLI::Option* seed_opt = nullptr;
  Settings settings;

  // defaults < file < flags
  void resolve(const Flags& flags) {
    if (!config_file.empty()) {
      for (auto& [k, v] : read_settings(config_file)) settings[k] = v;
    }
    for (const auto& [opt, key] : flags.options) {
      if (opt->count() > 0) settings[key] = flags.storage.at(key);
    }
    if (seed_opt->count() > 0) settings["seed"] = std::to_string(seed);
    seed = parse_as<std::uint64_t>(settings, "seed", seed);
    settings["seed"] = std::to_string(seed);
    if (threads == 0) throw Error("--threads must be >= 1");
  }

  Config model_config() const {
    Settings model_keys;
    for (const auto& [k, v] : settings) {
      if (!kCliKeys.count(k)) model_keys[k] = v;
    }
    Config cfg;
    apply_settings(cfg, model_keys);
    cfg.validate();
    return cfg;
  }
};

void add_model_flags(CLI::App* cmd, Flags& f) {
  add_setting(cmd, f, "k", "embedding width (default 256)");
  add_setting(cmd, f, "m", "short-term window (default 4)");
  add_setting(cmd, f, "f", "attention hidden width (default k)");
  add_setting(cmd, f, "tower_layers", "fusion tower depth L (default 2)");
  add_setting(cmd, f, "beta", "long-term update rate (default 0.5)");
  add_setting(cmd, f, "variant", "WoPM, STPM, ASTP, LTPM, ALTP, LSTP or ALSTP (default ALSTP)");
  add_setting(cmd, f, "share_projection", "share the projection between queries and products (default true)");
  add_setting(cmd, f, "negatives", "negatives per positive N_s (default 5)");
  add_setting(cmd, f, "lr", "learning rate (default 1e-4)");
  add_setting(cmd, f, "lr_grid", "comma-separated learning rates; best validation NDCG wins");
  add_setting(cmd, f, "momentum", "momentum (default 0.9)");
  add_setting(cmd, f, "clip_norm", "global gradient-norm clip (default 5)");
  add_setting(cmd, f, "l2", "L2 weight lambda (default 0)");
  add_setting(cmd, f, "epochs", "training epochs (default 20)");
  add_setting(cmd, f, "cutoff", "metric cutoff (default 20)");
  add_setting(cmd, f, "select_on_validation", "keep the best-validation epoch (default true)");
}

void print_metrics(const std::string& name, const eval::Metrics& m) {
  std::printf("%s HR@20 %.4f MRR@20 %.4f NDCG@20 %.4f (%zu instances)\n", name.c_str(), m.hr, m.mrr, m.ndcg,
              m.instances);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("alstp"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"Attentive long- and short-term preference modeling for personalized product search"};
  app.require_subcommand(1);
  Context ctx;
  std::string log_level = "info";
  ctx.seed_opt = app.add_option("--seed", ctx.seed, "random seed (default 42)");
  app.add_option("--threads", ctx.threads, "worker threads for evaluation; 1 is fully deterministic");
  app.add_option("--config", ctx.config_file, "flat key = value settings file")->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");
  Flags flags;

  // preprocess
  std::string reviews, meta, out, corpus_dir, embed_dir, model_dir, split = "test";
  auto* pre = app.add_subcommand("preprocess", "parse Amazon review/meta JSONL into a corpus directory");
  pre->add_option("--reviews", reviews, "review JSONL")->required();
  pre->add_option("--meta", meta, "metadata JSONL")->required();
  pre->add_option("--out", out, "corpus directory")->required();
  add_setting(pre, flags, "min_user_interactions", "minimum purchases per user (default 10)");
  add_setting(pre, flags, "min_product_interactions", "minimum purchases per product (default 1)");
  add_setting(pre, flags, "min_word_freq", "minimum review-word frequency (default 5)");

  // synth
  std::string profile = "mixed";
  auto* syn = app.add_subcommand("synth", "generate a synthetic corpus with planted preferences");
  syn->add_option("--profile", profile, "planted-shortterm, planted-longterm or mixed");
  syn->add_option("--out", out, "output directory")->required();
  add_setting(syn, flags, "users", "number of users (default 200)");
  add_setting(syn, flags, "purchases", "purchases per user (default 30)");
  add_setting(syn, flags, "session_switch", "theme switch probability (default 0.2)");
  add_setting(syn, flags, "style_loyalty", "style loyalty probability (default 0.9)");

  // embed
  auto* emb = app.add_subcommand("embed", "train PV-DM vectors for products and queries");
  emb->add_option("--corpus", corpus_dir, "corpus directory")->required();
  emb->add_option("--out", out, "embedding directory")->required();
  add_setting(emb, flags, "k", "vector width (default 256)");
  add_setting(emb, flags, "embed_window", "context window (default 5)");
  add_setting(emb, flags, "embed_negatives", "negative samples (default 5)");
  add_setting(emb, flags, "embed_epochs", "epochs (default 20)");
  add_setting(emb, flags, "embed_infer_epochs", "inference epochs for unseen queries (default 50)");
  add_setting(emb, flags, "embed_lr", "initial learning rate (default 0.025)");

  // train
  auto* trn = app.add_subcommand("train", "train a model and write a checkpoint");
  trn->add_option("--corpus", corpus_dir, "corpus directory")->required();
  trn->add_option("--embeddings", embed_dir, "embedding directory")->required();
  trn->add_option("--out", out, "checkpoint directory")->required();
  add_model_flags(trn, flags);

  // eval
  auto* evl = app.add_subcommand("eval", "rank the full catalog for every user and report metrics");
  evl->add_option("--corpus", corpus_dir, "corpus directory")->required();
  evl->add_option("--embeddings", embed_dir, "embedding directory")->required();
  evl->add_option("--model", model_dir, "checkpoint directory")->required();
  evl->add_option("--out", out, "evaluation directory")->required();
  evl->add_option("--split", split, "test or validation");

  // search
  std::string user, query;
  std::size_t top = 20;
  auto* sea = app.add_subcommand("search", "rank the catalog for one user and query text");
  sea->add_option("--corpus", corpus_dir, "corpus directory")->required();
  sea->add_option("--embeddings", embed_dir, "embedding directory")->required();
  sea->add_option("--model", model_dir, "checkpoint directory")->required();
  sea->add_option("--user", user, "user id")->required();
  sea->add_option("--query", query, "query text")->required();
  sea->add_option("--top", top, "results to print (default 20)");

  // attn-dump
  auto* att = app.add_subcommand("attn-dump", "export attention weights per evaluation instance");
  att->add_option("--corpus", corpus_dir, "corpus directory")->required();
  att->add_option("--embeddings", embed_dir, "embedding directory")->required();
  att->add_option("--model", model_dir, "checkpoint directory")->required();
  att->add_option("--out", out, "attn.jsonl path")->required();
  att->add_option("--split", split, "test or validation");

  // baselines
  std::vector<CLI::App*> base;
  for (const char* name : {"baseline-ql", "baseline-uql"}) {
    auto* b = app.add_subcommand(name, std::string(name) == "baseline-ql" ? "query likelihood (Dirichlet)"
                                                                          : "query likelihood with a user model");
    b->add_option("--corpus", corpus_dir, "corpus directory")->required();
    b->add_option("--out", out, "evaluation directory")->required();
    b->add_option("--split", split, "test or validation");
    add_setting(b, flags, "mu", "comma-separated Dirichlet mu grid (default 2000,6000,10000)");
    add_setting(b, flags, "cutoff", "metric cutoff (default 20)");
    if (std::string(name) == "baseline-uql") {
      add_setting(b, flags, "lambda_mix", "comma-separated mixing grid (default 0,0.2,...,1)");
      add_setting(b, flags, "profile_min_count", "user-word frequency threshold (default 50)");
    }
    base.push_back(b);
  }

  // significance
  std::string a_dir, b_dir;
  auto* sig = app.add_subcommand("significance", "paired t-test between two evaluation directories");
  sig->add_option("--a", a_dir, "first evaluation directory")->required();
  sig->add_option("--b", b_dir, "second evaluation directory")->required();
  sig->add_option("--out", out, "significance.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    ctx.resolve(flags);
    const auto& s = ctx.settings;

    if (*pre) {
      corpus::CorpusOptions o;
      o.min_user_interactions = parse_as<std::size_t>(s, "min_user_interactions", o.min_user_interactions);
      o.min_product_interactions = parse_as<std::size_t>(s, "min_product_interactions", o.min_product_interactions);
      o.min_word_freq = parse_as<std::size_t>(s, "min_word_freq", o.min_word_freq);
      o.seed = ctx.seed;
      pipeline::preprocess(reviews, meta, out, o);
    } else if (*syn) {
      synth::SynthOptions o;
      o.profile = synth::parse_profile(profile);
      o.users = parse_as<std::size_t>(s, "users", o.users);
      o.purchases = parse_as<std::size_t>(s, "purchases", o.purchases);
      o.session_switch = parse_as<double>(s, "session_switch", o.session_switch);
      o.style_loyalty = parse_as<double>(s, "style_loyalty", o.style_loyalty);
      o.seed = ctx.seed;
      pipeline::synthesize(o, out);
    } else if (*emb) {
      embed::PvdmConfig o;
      o.dim = parse_as<std::size_t>(s, "k", o.dim);
      o.window = parse_as<std::size_t>(s, "embed_window", o.window);
      o.negatives = parse_as<std::size_t>(s, "embed_negatives", o.negatives);
      o.epochs = parse_as<std::size_t>(s, "embed_epochs", o.epochs);
      o.infer_epochs = parse_as<std::size_t>(s, "embed_infer_epochs", o.infer_epochs);
      o.lr = parse_as<double>(s, "embed_lr", o.lr);
      o.seed = ctx.seed;
      pipeline::embed_corpus(corpus_dir, out, o);
    } else if (*trn) {
      pipeline::TrainOptions o;
      o.config = ctx.model_config();
      o.lr_grid = parse_list(s, "lr_grid", {});
      o.threads = ctx.threads;
      auto ck = pipeline::train_model(corpus_dir, embed_dir, out, o);
      std::printf("best epoch %zu, lr %g -> %s\n", ck.best_epoch, ck.model.config().lr, out.c_str());
    } else if (*evl) {
      auto r = pipeline::evaluate_model(corpus_dir, embed_dir, model_dir, out, pipeline::parse_split(split), ctx.threads);
      print_metrics(pipeline::split_name(pipeline::parse_split(split)), r.metrics);
    } else if (*sea) {
      auto r = pipeline::search(corpus_dir, embed_dir, model_dir, user, query, top);
      for (const auto& h : r.hits) std::printf("%zu\t%s\t%.6f\n", h.rank, h.product.c_str(), h.score);
    } else if (*att) {
      auto recs = pipeline::attention_dump(corpus_dir, embed_dir, model_dir, out, pipeline::parse_split(split));
      std::printf("%zu records -> %s\n", recs.size(), out.c_str());
    } else if (*base[0] || *base[1]) {
      const bool uql = base[1]->parsed();
      pipeline::BaselineOptions o;
      o.mu_grid = parse_list(s, "mu", o.mu_grid);
      if (uql) o.lambda_grid = parse_list(s, "lambda_mix", o.lambda_grid);
      o.profile_min_count = parse_as<std::size_t>(s, "profile_min_count", o.profile_min_count);
      o.cutoff = parse_as<std::size_t>(s, "cutoff", o.cutoff);
      o.split = pipeline::parse_split(split);
      auto r = pipeline::run_baseline(corpus_dir, out, uql, o);
      print_metrics(uql ? "UQL" : "QL", r.metrics);
    } else if (*sig) {
      auto j = pipeline::significance(a_dir, b_dir, out);
      for (const char* m : {"hr", "mrr", "ndcg"}) {
        std::printf("%s: t %.4f p %.4g\n", m, j["metrics"][m]["t"].get<double>(), j["metrics"][m]["p"].get<double>());
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
