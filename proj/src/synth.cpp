#include "alstp/synth.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "alstp/rng.hpp"
#include "alstp/tensor.hpp"

namespace alstp::synth {

namespace {

constexpr std::array<const char*, 2> kGroups = {"Gadgets", "Apparel"};
constexpr std::array<const char*, kCategories> kCategoryNames = {"Phones", "Cameras", "Laptops", "Tablets",
                                                                 "Speakers", "Shirts", "Shoes", "Jackets",
                                                                 "Hats",     "Scarves"};
constexpr std::array<const char*, kThemes> kThemeWords = {"red",    "blue",  "green", "yellow", "purple",
                                                          "orange", "black", "white", "silver", "golden"};
constexpr std::array<const char*, kStyles> kStyleWords = {"classic", "modern", "rustic", "sporty", "elegant"};
constexpr std::array<const char*, 16> kFiller = {"great",  "nice",    "solid", "cheap",    "sturdy", "light",
                                                 "handy",  "perfect", "happy", "recommend", "quality", "price",
                                                 "works",  "fine",    "daily", "value"};
constexpr std::array<const char*, 4> kTemplates = {
    "this {t} {c} looks {s} and feels {f}",
    "the {s} design of my {t} {c} is {f}",
    "{f} {c} with a {t} finish and a {s} look",
    "bought the {t} one because i like {s} {c} it is {f}",
};

std::string render(std::string_view tpl, const ProductFacets& p, Rng& rng) {
  std::uniform_int_distribution<std::size_t> filler(0, kFiller.size() - 1);
  std::string out;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] == '{' && i + 2 < tpl.size() && tpl[i + 2] == '}') {
      switch (tpl[i + 1]) {
        case 't': out += kThemeWords[p.theme]; break;
        case 's': out += kStyleWords[p.style]; break;
        case 'c': out += text::tokenize(kCategoryNames[p.category])[0]; break;
        default: out += kFiller[filler(rng)]; break;
      }
      i += 2;
    } else {
      out += tpl[i];
    }
  }
  return out;
}

std::string review_text(const ProductFacets& p, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, kTemplates.size() - 1);
  return render(kTemplates[pick(rng)], p, rng) + ". " + render(kTemplates[pick(rng)], p, rng) + ".";
}

std::size_t uniform(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

// Uniform over [0, n) minus `avoid`.
std::size_t uniform_except(Rng& rng, std::size_t n, std::size_t avoid) {
  auto v = uniform(rng, n - 1);
  return v >= avoid ? v + 1 : v;
}

bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

std::size_t category_in_group(Rng& rng, std::size_t group) { return group * (kCategories / 2) + uniform(rng, kCategories / 2); }

}  // namespace

Profile parse_profile(std::string_view name) {
  if (name == "planted-shortterm") return Profile::ShortTerm;
  if (name == "planted-longterm") return Profile::LongTerm;
  if (name == "mixed") return Profile::Mixed;
  throw Error("unknown synthetic profile '" + std::string(name) +
              "' (expected planted-shortterm, planted-longterm or mixed)");
}

std::string_view profile_name(Profile p) {
  switch (p) {
    case Profile::ShortTerm: return "planted-shortterm";
    case Profile::LongTerm: return "planted-longterm";
    case Profile::Mixed: return "mixed";
  }
  return "?";
}

ProductFacets facets(std::size_t product) {
  if (product >= kCatalogSize) throw Error("synthetic product index out of range");
  return {product % kCategories, (product / kCategories) % kThemes, product / (kCategories * kThemes)};
}

std::size_t product_index(const ProductFacets& f) {
  return f.category + kCategories * (f.theme + kThemes * f.style);
}

std::string product_id(std::size_t product) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04zu", product);
  return buf;
}

std::vector<std::string> category_path(std::size_t category) {
  return {"Synth Store", kGroups[category < kCategories / 2 ? 0 : 1], kCategoryNames.at(category)};
}

SynthCorpus generate(const SynthOptions& opt) {
  if (opt.users == 0 || opt.purchases < 3) throw Error("synth: need users >= 1 and purchases >= 3");
  SynthCorpus out;
  for (std::size_t p = 0; p < kCatalogSize; ++p) {
    out.meta.push_back({product_id(p), {category_path(facets(p).category)}});
  }

  const bool sessions = opt.profile != Profile::LongTerm;
  const bool styled = opt.profile != Profile::ShortTerm;
  nlohmann::json users = nlohmann::json::array();
  Rng rng(derive_seed(opt.seed, 0x53594e));

  for (std::size_t u = 0; u < opt.users; ++u) {
    char uid[16];
    std::snprintf(uid, sizeof uid, "U%04zu", u);
    nlohmann::json ju{{"user", uid}};

    std::array<std::size_t, 2> theme{uniform(rng, kThemes), uniform(rng, kThemes)};
    std::array<std::size_t, 2> session{0, 0};
    std::size_t style = uniform(rng, kStyles);
    std::size_t drift_at = opt.purchases;
    if (opt.profile == Profile::LongTerm) {
      drift_at = opt.purchases / 3 + uniform(rng, std::max<std::size_t>(1, opt.purchases / 3));
      const std::size_t later = uniform_except(rng, kStyles, style);
      ju["styles"] = {style, later};
      ju["drift_at"] = drift_at;
    } else if (styled) {
      ju["style"] = style;
    }

    nlohmann::json purchases = nlohmann::json::array();
    const std::int64_t base = 1'300'000'000 + static_cast<std::int64_t>(u) * 7;
    for (std::size_t i = 0; i < opt.purchases; ++i) {
      ProductFacets f;
      std::size_t group;
      nlohmann::json jp;
      if (opt.profile == Profile::LongTerm) {
        group = i % 6 == 5 ? 0 : 1;
        f.category = category_in_group(rng, group);
        f.theme = uniform(rng, kThemes);
        const std::size_t current = i < drift_at ? ju["styles"][0].get<std::size_t>() : ju["styles"][1].get<std::size_t>();
        if (group == 0) {
          f.style = coin(rng, opt.style_loyalty) ? current : uniform_except(rng, kStyles, current);
        } else {
          f.style = uniform(rng, kStyles);
        }
      } else {
        group = uniform(rng, 2);
        f.category = category_in_group(rng, group);
        f.theme = theme[group];
        f.style = styled ? (coin(rng, opt.style_loyalty) ? style : uniform_except(rng, kStyles, style))
                         : uniform(rng, kStyles);
      }
      const std::size_t product = product_index(f);
      jp["product"] = product_id(product);
      jp["group"] = group;
      jp["category"] = f.category;
      jp["topic"] = f.theme;
      jp["style"] = f.style;
      if (sessions) {
        jp["session"] = std::string(1, static_cast<char>('A' + group)) + std::to_string(session[group]);
        if (coin(rng, opt.session_switch)) {
          theme[group] = uniform_except(rng, kThemes, theme[group]);
          ++session[group];
        }
      }
      purchases.push_back(jp);
      out.reviews.push_back({uid, product_id(product), review_text(f, rng),
                             base + static_cast<std::int64_t>(i) * 86'400});
    }
    ju["purchases"] = std::move(purchases);
    users.push_back(std::move(ju));
  }

  nlohmann::json tags = nlohmann::json::array();
  if (sessions) tags.push_back("topic");
  if (styled) tags.push_back("style");
  out.ground_truth = {
      {"profile", profile_name(opt.profile)},
      {"seed", opt.seed},
      {"users", opt.users},
      {"purchases_per_user", opt.purchases},
      {"catalog", {{"products", kCatalogSize}, {"categories", kCategories}, {"themes", kThemes}, {"styles", kStyles}}},
      {"session_switch", opt.session_switch},
      {"style_loyalty", opt.style_loyalty},
      {"tags", tags},
      {"user_truth", std::move(users)},
  };
  return out;
}

void write(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("reviews.json");
    for (const auto& r : corpus.reviews) {
      os << nlohmann::json{{"reviewerID", r.user_id},
                           {"asin", r.product_id},
                           {"reviewText", r.review_text},
                           {"unixReviewTime", r.timestamp}}
                .dump()
         << '\n';
    }
  }
  {
    auto os = open("meta.json");
    for (const auto& m : corpus.meta) {
      os << nlohmann::json{{"asin", m.product_id}, {"categories", m.category_paths}}.dump() << '\n';
    }
  }
  auto os = open("ground_truth.json");
  os << corpus.ground_truth.dump(2) << '\n';
}

}  // namespace alstp::synth
