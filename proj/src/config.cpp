#include "alstp/config.hpp"

#include <fstream>
#include <sstream>

#include "alstp/tensor.hpp"

namespace alstp {

using nlohmann::json;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::WoPM: return "WoPM";
    case Variant::STPM: return "STPM";
    case Variant::ASTP: return "ASTP";
    case Variant::LTPM: return "LTPM";
    case Variant::ALTP: return "ALTP";
    case Variant::LSTP: return "LSTP";
    case Variant::ALSTP: return "ALSTP";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw Error("unknown model variant: " + std::string(name));
}

Wiring ablate(Variant v) {
  switch (v) {
    case Variant::WoPM: return {};
    case Variant::STPM: return {true, false, false, false};
    case Variant::ASTP: return {true, false, true, false};
    case Variant::LTPM: return {false, true, false, false};
    case Variant::ALTP: return {false, true, false, true};
    case Variant::LSTP: return {true, true, false, false};
    case Variant::ALSTP: return {true, true, true, true};
  }
  throw Error("unknown model variant");
}

std::vector<std::size_t> Config::tower_widths() const {
  const std::size_t in = k * wiring().fusion_parts();
  std::vector<std::size_t> w{in};
  for (std::size_t i = 1; i <= tower_layers; ++i) w.push_back(in - (in - k) * i / tower_layers);
  return w;
}

void Config::validate() const {
  auto fail = [](const std::string& msg) { throw Error("invalid config: " + msg); };
  if (k == 0) fail("k must be >= 1");
  if (m == 0) fail("m must be >= 1");
  if (tower_layers == 0) fail("tower_layers must be >= 1");
  if (negatives == 0) fail("negatives must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
  if (!(lr >= 0.0)) fail("lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(l2 >= 0.0)) fail("l2 must be non-negative");
  if (cutoff == 0) fail("cutoff must be >= 1");
  auto w = tower_widths();
  if (w.front() > k) {
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (w[i] >= w[i - 1]) fail("tower widths must strictly decrease; use fewer tower_layers");
    }
  }
}

json Config::to_json() const {
  return {{"k", k},
          {"m", m},
          {"f", attention_width()},
          {"tower_layers", tower_layers},
          {"beta", beta},
          {"variant", std::string(variant_name(variant))},
          {"share_projection", share_projection},
          {"negatives", negatives},
          {"lr", lr},
          {"momentum", momentum},
          {"clip_norm", clip_norm},
          {"l2", l2},
          {"epochs", epochs},
          {"cutoff", cutoff},
          {"select_on_validation", select_on_validation},
          {"seed", seed}};
}

Config Config::from_json(const json& j) {
  Config c;
  c.k = j.at("k").get<std::size_t>();
  c.m = j.at("m").get<std::size_t>();
  c.f = j.at("f").get<std::size_t>();
  c.tower_layers = j.at("tower_layers").get<std::size_t>();
  c.beta = j.at("beta").get<double>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.share_projection = j.at("share_projection").get<bool>();
  c.negatives = j.at("negatives").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.l2 = j.at("l2").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.cutoff = j.at("cutoff").get<std::size_t>();
  c.select_on_validation = j.at("select_on_validation").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::map<std::string, std::string> read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !is.eof()) throw Error("config key " + key + ": cannot parse \"" + text + "\"");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error("config key " + key + ": expected true/false, got \"" + text + "\"");
}

}  // namespace

void apply_settings(Config& cfg, const std::map<std::string, std::string>& settings) {
  for (const auto& [key, value] : settings) {
    if (key == "k") cfg.k = parse_value<std::size_t>(key, value);
    else if (key == "m") cfg.m = parse_value<std::size_t>(key, value);
    else if (key == "f") cfg.f = parse_value<std::size_t>(key, value);
    else if (key == "tower_layers" || key == "L") cfg.tower_layers = parse_value<std::size_t>(key, value);
    else if (key == "beta") cfg.beta = parse_value<double>(key, value);
    else if (key == "variant") cfg.variant = parse_variant(value);
    else if (key == "share_projection") cfg.share_projection = parse_bool(key, value);
    else if (key == "negatives" || key == "N_s") cfg.negatives = parse_value<std::size_t>(key, value);
    else if (key == "lr") cfg.lr = parse_value<double>(key, value);
    else if (key == "momentum") cfg.momentum = parse_value<double>(key, value);
    else if (key == "clip_norm" || key == "clip") cfg.clip_norm = parse_value<double>(key, value);
    else if (key == "l2" || key == "lambda") cfg.l2 = parse_value<double>(key, value);
    else if (key == "epochs") cfg.epochs = parse_value<std::size_t>(key, value);
    else if (key == "cutoff") cfg.cutoff = parse_value<std::size_t>(key, value);
    else if (key == "select_on_validation") cfg.select_on_validation = parse_bool(key, value);
    else if (key == "seed") cfg.seed = parse_value<std::uint64_t>(key, value);
    else throw Error("unknown config key: " + key);
  }
}

}  // namespace alstp
