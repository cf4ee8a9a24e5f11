#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>
#include <spdlog/spdlog.h>

#include "alstp/pipeline.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace alstp;

namespace {

py::object to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return py::none();
    case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
    case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(to_py(v));
      return out;
    }
    default: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = to_py(v);
      return out;
    }
  }
}

py::dict metrics_dict(const eval::Metrics& m) {
  py::dict d;
  d["hr"] = m.hr;
  d["mrr"] = m.mrr;
  d["ndcg"] = m.ndcg;
  d["instances"] = m.instances;
  return d;
}

py::dict eval_dict(const eval::EvalResult& r) {
  auto d = metrics_dict(r.metrics);
  d["ranks"] = r.ranks();
  return d;
}

// Python keyword values become the same strings a settings file would hold.
Config config_from(const py::dict& overrides) {
  Config cfg;
  std::map<std::string, std::string> settings;
  for (const auto& [key, value] : overrides) {
    const auto k = py::cast<std::string>(key);
    if (py::isinstance<py::bool_>(value)) {
      settings[k] = py::cast<bool>(value) ? "true" : "false";
    } else {
      settings[k] = py::cast<std::string>(py::str(value));
    }
  }
  apply_settings(cfg, settings);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_alstp, m) {
  m.doc() = "Attentive long- and short-term preference modeling for personalized product search";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  spdlog::set_level(spdlog::level::warn);

  m.def("set_log_level", [](const std::string& level) { spdlog::set_level(spdlog::level::from_str(level)); });
  m.def("variants", [] {
    std::vector<std::string> out;
    for (auto v : kAllVariants) out.emplace_back(variant_name(v));
    return out;
  });
  m.def("default_config", [] { return to_py(Config{}.to_json()); });

  m.def(
      "synthesize",
      [](const fs::path& out, const std::string& profile, std::size_t users, std::size_t purchases,
         double session_switch, double style_loyalty, std::uint64_t seed) {
        synth::SynthOptions o;
        o.profile = synth::parse_profile(profile);
        o.users = users;
        o.purchases = purchases;
        o.session_switch = session_switch;
        o.style_loyalty = style_loyalty;
        o.seed = seed;
        return to_py(pipeline::synthesize(o, out).ground_truth);
      },
      py::arg("out_dir"), py::arg("profile") = "mixed", py::arg("users") = 200, py::arg("purchases") = 30,
      py::arg("session_switch") = 0.2, py::arg("style_loyalty") = 0.9, py::arg("seed") = 42);

  m.def(
      "preprocess",
      [](const fs::path& reviews, const fs::path& meta, const fs::path& out, std::size_t min_user_interactions,
         std::size_t min_product_interactions, std::size_t min_word_freq, std::uint64_t seed) {
        corpus::CorpusOptions o;
        o.min_user_interactions = min_user_interactions;
        o.min_product_interactions = min_product_interactions;
        o.min_word_freq = min_word_freq;
        o.seed = seed;
        const auto c = pipeline::preprocess(reviews, meta, out, o);
        py::dict d;
        d["users"] = c.users.size();
        d["products"] = c.products.size();
        d["queries"] = c.queries.size();
        d["interactions"] = c.interactions.size();
        d["dropped_users"] = c.counts.dropped_users;
        return d;
      },
      py::arg("reviews"), py::arg("meta"), py::arg("out_dir"), py::arg("min_user_interactions") = 10,
      py::arg("min_product_interactions") = 1, py::arg("min_word_freq") = 5, py::arg("seed") = 42);

  m.def(
      "embed",
      [](const fs::path& corpus_dir, const fs::path& out, std::size_t k, std::size_t window, std::size_t negatives,
         std::size_t epochs, std::size_t infer_epochs, double lr, std::uint64_t seed) {
        embed::PvdmConfig o;
        o.dim = k;
        o.window = window;
        o.negatives = negatives;
        o.epochs = epochs;
        o.infer_epochs = infer_epochs;
        o.lr = lr;
        o.seed = seed;
        return pipeline::embed_corpus(corpus_dir, out, o).checksum();
      },
      py::arg("corpus_dir"), py::arg("out_dir"), py::arg("k") = 256, py::arg("window") = 5, py::arg("negatives") = 5,
      py::arg("epochs") = 20, py::arg("infer_epochs") = 50, py::arg("lr") = 0.025, py::arg("seed") = 42);

  m.def(
      "train",
      [](const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& out, const py::dict& config,
         std::vector<double> lr_grid, std::size_t threads) {
        pipeline::TrainOptions o;
        o.config = config_from(config);
        o.lr_grid = std::move(lr_grid);
        o.threads = threads;
        pipeline::Checkpoint ck;
        {
          py::gil_scoped_release release;
          ck = pipeline::train_model(corpus_dir, embed_dir, out, o);
        }
        py::dict d;
        d["best_epoch"] = ck.best_epoch;
        d["config"] = to_py(ck.model.config().to_json());
        return d;
      },
      py::arg("corpus_dir"), py::arg("embeddings_dir"), py::arg("out_dir"), py::arg("config") = py::dict(),
      py::arg("lr_grid") = std::vector<double>{}, py::arg("threads") = 1);

  m.def(
      "evaluate",
      [](const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir, const fs::path& out,
         const std::string& split, std::size_t threads) {
        eval::EvalResult r;
        {
          py::gil_scoped_release release;
          r = pipeline::evaluate_model(corpus_dir, embed_dir, model_dir, out, pipeline::parse_split(split), threads);
        }
        return eval_dict(r);
      },
      py::arg("corpus_dir"), py::arg("embeddings_dir"), py::arg("model_dir"), py::arg("out_dir"),
      py::arg("split") = "test", py::arg("threads") = 1);

  m.def(
      "search",
      [](const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir, const std::string& user,
         const std::string& query, std::size_t top) {
        const auto r = pipeline::search(corpus_dir, embed_dir, model_dir, user, query, top);
        py::list hits;
        for (const auto& h : r.hits) hits.append(py::make_tuple(h.rank, h.product, h.score));
        py::dict d;
        d["cold_start"] = r.cold_start;
        d["hits"] = hits;
        return d;
      },
      py::arg("corpus_dir"), py::arg("embeddings_dir"), py::arg("model_dir"), py::arg("user"), py::arg("query"),
      py::arg("top") = 20);

  m.def(
      "attention",
      [](const fs::path& corpus_dir, const fs::path& embed_dir, const fs::path& model_dir, const fs::path& out_file,
         const std::string& split) {
        py::list out;
        for (const auto& r : pipeline::attention_dump(corpus_dir, embed_dir, model_dir, out_file,
                                                      pipeline::parse_split(split))) {
          py::dict d;
          d["user"] = r.user;
          d["target"] = r.target;
          d["query"] = r.query;
          d["previous_queries"] = r.previous_queries;
          d["previous_products"] = r.previous_products;
          d["short_weights"] = r.short_weights;
          d["long_weights"] = r.long_weights;
          out.append(d);
        }
        return out;
      },
      py::arg("corpus_dir"), py::arg("embeddings_dir"), py::arg("model_dir"), py::arg("out_file"),
      py::arg("split") = "test");

  m.def(
      "baseline",
      [](const fs::path& corpus_dir, const fs::path& out, bool uql, std::vector<double> mu,
         std::vector<double> lambda_mix, std::size_t profile_min_count, std::size_t cutoff, const std::string& split) {
        pipeline::BaselineOptions o;
        o.mu_grid = std::move(mu);
        o.lambda_grid = std::move(lambda_mix);
        o.profile_min_count = profile_min_count;
        o.cutoff = cutoff;
        o.split = pipeline::parse_split(split);
        return eval_dict(pipeline::run_baseline(corpus_dir, out, uql, o));
      },
      py::arg("corpus_dir"), py::arg("out_dir"), py::arg("uql") = false,
      py::arg("mu") = std::vector<double>{2000.0, 6000.0, 10000.0}, py::arg("lambda_mix") = std::vector<double>{},
      py::arg("profile_min_count") = 50, py::arg("cutoff") = 20, py::arg("split") = "test");

  m.def(
      "significance",
      [](const fs::path& a, const fs::path& b, const fs::path& out) { return to_py(pipeline::significance(a, b, out)); },
      py::arg("a_dir"), py::arg("b_dir"), py::arg("out_file"));

  m.def("hit_ratio", &eval::hit_ratio, py::arg("rank"), py::arg("cutoff") = eval::kDefaultCutoff);
  m.def("reciprocal_rank", &eval::reciprocal_rank, py::arg("rank"), py::arg("cutoff") = eval::kDefaultCutoff);
  m.def("ndcg", &eval::ndcg_single, py::arg("rank"), py::arg("cutoff") = eval::kDefaultCutoff);
  m.def(
      "aggregate",
      [](const std::vector<std::size_t>& ranks, std::size_t cutoff) { return metrics_dict(eval::aggregate(ranks, cutoff)); },
      py::arg("ranks"), py::arg("cutoff") = eval::kDefaultCutoff);
  m.def(
      "paired_ttest",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = eval::paired_ttest(a, b);
        py::dict d;
        d["t"] = r.t;
        d["p"] = r.p;
        d["n"] = r.n;
        d["degenerate"] = r.degenerate;
        return d;
      },
      py::arg("a"), py::arg("b"));
}
