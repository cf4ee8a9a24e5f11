// End-to-end checks that run the alstp binary as a subprocess.

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "alstp/pipeline.hpp"
#include "tmpdir.hpp"

#ifndef ALSTP_BIN
#error "ALSTP_BIN must point at the alstp executable"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run_cli(const test::TempDir& tmp, const std::string& args) {
  const auto out = tmp / "stdout.txt", err = tmp / "stderr.txt";
  const std::string cmd = std::string(ALSTP_BIN) + " --log-level off " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// 4 users x 12 purchases over 8 products in two categories.
void write_fixture(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream meta(dir / "meta.json"), reviews(dir / "reviews.json");
  const char* paths[2] = {R"([["Electronics","Cell Phones","Batteries"]])", R"([["Home","Kitchen","Knives"]])"};
  const char* words[2][3] = {{"charge", "battery", "power"}, {"sharp", "blade", "steel"}};
  for (int p = 0; p < 8; ++p) meta << R"({"asin":"B)" << p << R"(","categories":)" << paths[p % 2] << "}\n";
  for (int u = 0; u < 4; ++u) {
    for (int i = 0; i < 12; ++i) {
      const int p = (u + i * (u + 1)) % 8;
      reviews << R"({"reviewerID":"R)" << u << R"(","asin":"B)" << p << R"(","unixReviewTime":)" << 1000 + i
              << R"(,"reviewText":"a )" << words[p % 2][i % 3] << " good " << words[p % 2][(i + 1) % 3] << R"("})"
              << "\n";
    }
  }
}

// corpus -> embeddings -> checkpoint with small settings; returns the root.
void build_pipeline(const test::TempDir& tmp, const fs::path& root, const std::string& seed, std::size_t epochs) {
  write_fixture(root / "raw");
  auto r = run_cli(tmp, "--seed " + seed + " preprocess --reviews " + (root / "raw/reviews.json").string() + " --meta " +
                          (root / "raw/meta.json").string() + " --out " + (root / "corpus").string() +
                          " --min-word-freq 1");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = run_cli(tmp, "--seed " + seed + " embed --corpus " + (root / "corpus").string() + " --out " +
                     (root / "emb").string() + " --k 8 --embed-epochs 5 --embed-infer-epochs 5");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = run_cli(tmp, "--seed " + seed + " train --corpus " + (root / "corpus").string() + " --embeddings " +
                     (root / "emb").string() + " --out " + (root / "model").string() +
                     " --k 8 --m 3 --lr 0.01 --negatives 2 --epochs " + std::to_string(epochs));
  REQUIRE_MESSAGE(r.code == 0, r.err);
}

std::string model_flags(const fs::path& root) {
  return " --corpus " + (root / "corpus").string() + " --embeddings " + (root / "emb").string() + " --model " +
         (root / "model").string();
}

}  // namespace

TEST_CASE("preprocess: missing metadata names the path") {
  test::TempDir tmp;
  write_fixture(tmp / "raw");
  const auto missing = (tmp / "nope" / "meta.json").string();
  auto r = run_cli(tmp, "preprocess --reviews " + (tmp / "raw/reviews.json").string() + " --meta " + missing + " --out " +
                          (tmp / "corpus").string());
  CHECK(r.code != 0);
  CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("preprocess writes the corpus files and is reproducible") {
  test::TempDir tmp;
  write_fixture(tmp / "raw");
  for (const char* out : {"c1", "c2"}) {
    auto r = run_cli(tmp, "preprocess --reviews " + (tmp / "raw/reviews.json").string() + " --meta " +
                            (tmp / "raw/meta.json").string() + " --out " + (tmp / out).string() +
                            " --min-word-freq 1");
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  for (const char* f : {"interactions.tsv", "queries.tsv", "vocab.tsv", "split.json", "manifest.json", "run.json"}) {
    CHECK_MESSAGE(fs::exists(tmp / "c1" / f), f);
  }
  const auto a = json::parse(slurp(tmp / "c1/run.json")), b = json::parse(slurp(tmp / "c2/run.json"));
  CHECK(a["outputs"] == b["outputs"]);
  for (const char* f : {"interactions.tsv", "queries.tsv", "vocab.tsv", "split.json", "manifest.json"}) {
    CHECK(alstp::pipeline::git_blob_hash(tmp / "c1" / f) == alstp::pipeline::git_blob_hash(tmp / "c2" / f));
  }
}

TEST_CASE("search and attn-dump on a trained model") {
  test::TempDir tmp;
  build_pipeline(tmp, tmp / "run", "7", 1);
  const auto root = tmp / "run";

  // 8 products < 20: the whole catalog comes back.
  auto r = run_cli(tmp, "search" + model_flags(root) + " --user R1 --query \"cell phones batteries\"");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(count_lines(r.out) == 8);
  r = run_cli(tmp, "search" + model_flags(root) + " --user R1 --query \"cell phones batteries\" --top 3");
  CHECK(count_lines(r.out) == 3);
  // Unknown users fall back to the query-only path.
  r = run_cli(tmp, "search" + model_flags(root) + " --user nobody --query \"kitchen knives\"");
  CHECK(r.code == 0);
  CHECK(count_lines(r.out) == 8);

  const auto attn = tmp / "attn.jsonl";
  r = run_cli(tmp, "attn-dump" + model_flags(root) + " --out " + attn.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::ifstream in(attn);
  std::string line;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    CHECK(j["short_weights"].size() == 3);
    CHECK(j["long_weights"].size() == 8);
    double s = 0;
    for (double w : j["short_weights"]) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    ++records;
  }
  CHECK(records == 4);
}

TEST_CASE("untrained models score near the random expectation") {
  // A random ranking of N products puts the target at rank r with probability 1/N.
  test::TempDir tmp;
  const auto corpus = tmp / "corpus";
  auto r = run_cli(tmp, "synth --profile mixed --users 60 --purchases 12 --out " + (tmp / "syn").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = run_cli(tmp, "preprocess --reviews " + (tmp / "syn/reviews.json").string() + " --meta " +
                     (tmp / "syn/meta.json").string() + " --out " + corpus.string() + " --min-word-freq 1");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto products = json::parse(slurp(corpus / "manifest.json"))["counts"]["products"].get<double>();
  double expect = 0;
  for (int rank = 1; rank <= 20; ++rank) expect += 1.0 / std::log2(rank + 1.0);
  expect /= products;

  double total = 0;
  for (int seed = 1; seed <= 5; ++seed) {
    const auto s = std::to_string(seed);
    const auto emb = tmp / ("emb" + s), model = tmp / ("model" + s), ev = tmp / ("eval" + s);
    r = run_cli(tmp, "--seed " + s + " embed --corpus " + corpus.string() + " --out " + emb.string() +
                       " --k 8 --embed-epochs 1 --embed-infer-epochs 1");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run_cli(tmp, "--seed " + s + " train --corpus " + corpus.string() + " --embeddings " + emb.string() +
                       " --out " + model.string() + " --k 8 --epochs 0");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run_cli(tmp, "eval --corpus " + corpus.string() + " --embeddings " + emb.string() + " --model " +
                       model.string() + " --out " + ev.string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    total += json::parse(slurp(ev / "metrics.json"))["ndcg"].get<double>();
  }
  const double mean = total / 5;
  INFO("mean ndcg " << mean << " vs random " << expect);
  CHECK(mean <= 3 * expect);
  CHECK(mean >= expect / 3);
}

TEST_CASE("synth is seeded") {
  test::TempDir tmp;
  for (const char* d : {"a", "b"}) {
    auto r = run_cli(tmp, "--seed 5 synth --profile planted-longterm --users 10 --purchases 12 --out " + (tmp / d).string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  auto r = run_cli(tmp, "--seed 6 synth --profile planted-longterm --users 10 --purchases 12 --out " + (tmp / "c").string());
  REQUIRE(r.code == 0);
  for (const char* f : {"reviews.json", "meta.json", "ground_truth.json"}) {
    CHECK(slurp(tmp / "a" / f) == slurp(tmp / "b" / f));
  }
  CHECK(slurp(tmp / "a/reviews.json") != slurp(tmp / "c/reviews.json"));
  CHECK(run_cli(tmp, "synth --profile nonsense --out " + (tmp / "d").string()).code != 0);
}

TEST_CASE("config file sits between defaults and flags") {
  test::TempDir tmp;
  build_pipeline(tmp, tmp / "run", "3", 0);
  const auto root = tmp / "run";
  {
    std::ofstream cfg(tmp / "cfg.txt");
    cfg << "# overrides\nm = 2\nk = 8\nepochs = 0\nlr = 0.5\n";
  }
  auto r = run_cli(tmp, "--config " + (tmp / "cfg.txt").string() + " train --corpus " + (root / "corpus").string() +
                          " --embeddings " + (root / "emb").string() + " --out " + (tmp / "m2").string() +
                          " --lr 0.25");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto cfg = json::parse(slurp(tmp / "m2/run.json"))["config"];
  CHECK(cfg["m"] == 2);             // file over default
  CHECK(cfg["lr"] == 0.25);         // flag over file
  CHECK(cfg["tower_layers"] == 2);  // default
  {
    std::ofstream bad(tmp / "bad.txt");
    bad << "no_such_key = 1\n";
  }
  r = run_cli(tmp, "--config " + (tmp / "bad.txt").string() + " train --corpus " + (root / "corpus").string() +
                     " --embeddings " + (root / "emb").string() + " --out " + (tmp / "m3").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("no_such_key") != std::string::npos);
}
