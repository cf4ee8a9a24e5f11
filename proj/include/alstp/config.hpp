#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace alstp {

enum class Variant { WoPM, STPM, ASTP, LTPM, ALTP, LSTP, ALSTP };

inline constexpr std::array<Variant, 7> kAllVariants = {Variant::WoPM, Variant::STPM, Variant::ASTP, Variant::LTPM,
                                                        Variant::ALTP, Variant::LSTP, Variant::ALSTP};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

// Which preference parts feed the fusion tower and whether each is attended.
struct Wiring {
  bool short_term = false;
  bool long_term = false;
  bool short_attention = false;
  bool long_attention = false;

  std::size_t fusion_parts() const { return 1 + short_term + long_term; }
  bool operator==(const Wiring&) const = default;
};

Wiring ablate(Variant v);

struct Config {
  std::size_t k = 256;           // embedding width
  std::size_t m = 4;             // short-term window
  std::size_t f = 0;             // attention hidden width; 0 means k
  std::size_t tower_layers = 2;  // L
  double beta = 0.5;             // long-term update rate
  Variant variant = Variant::ALSTP;
  bool share_projection = true;

  std::size_t negatives = 5;
  double lr = 1e-4;
  double momentum = 0.9;
  double clip_norm = 5.0;
  double l2 = 0.0;
  std::size_t epochs = 20;
  std::size_t cutoff = 20;
  bool select_on_validation = true;
  std::uint64_t seed = 42;

  std::size_t attention_width() const { return f ? f : k; }
  Wiring wiring() const { return ablate(variant); }
  // Input width first, k last.
  std::vector<std::size_t> tower_widths() const;
  void validate() const;

  nlohmann::json to_json() const;
  static Config from_json(const nlohmann::json& j);
};

// Flat `key = value` settings file; '#' starts a comment.
std::map<std::string, std::string> read_settings(const std::filesystem::path& path);

// Applies recognised keys to `cfg`; unknown keys throw.
void apply_settings(Config& cfg, const std::map<std::string, std::string>& settings);

}  // namespace alstp
