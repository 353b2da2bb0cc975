#include "data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sologan {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t sample_seed(uint64_t base, int64_t domain, bool train, int64_t index) {
  uint64_t h = splitmix64(base ^ 0x536f6c6f47414eULL);
  h = splitmix64(h ^ static_cast<uint64_t>(domain + 1));
  h = splitmix64(h ^ (train ? 0x747261696eULL : 0x74657374ULL));
  return splitmix64(h ^ static_cast<uint64_t>(index + 1));
}

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

std::array<float, 3> lerp_color(const std::array<float, 3>& a, const std::array<float, 3>& b,
                                float t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

json recipe_to_json(const DomainRecipe& r) {
  return json{{"name", r.name},
              {"shape_family", r.shape_family},
              {"palette_a", r.palette_a},
              {"palette_b", r.palette_b},
              {"texture", r.texture}};
}

DomainRecipe recipe_from_json(const json& j) {
  static const std::vector<std::string> known = {"name", "shape_family", "palette_a", "palette_b",
                                                 "texture"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::config,
            "unknown key in domain recipe: " + it.key());
  DomainRecipe r;
  r.name = j.at("name").get<std::string>();
  if (j.contains("shape_family")) r.shape_family = j.at("shape_family").get<int>();
  if (j.contains("palette_a")) r.palette_a = j.at("palette_a").get<std::array<float, 3>>();
  if (j.contains("palette_b")) r.palette_b = j.at("palette_b").get<std::array<float, 3>>();
  if (j.contains("texture")) r.texture = j.at("texture").get<int>();
  return r;
}

}  // namespace

void SyntheticSpec::validate() const {
  require(domains.size() >= 2, ErrorCode::config, "synthetic spec needs at least 2 domains");
  require(image_size >= 16, ErrorCode::config, "synthetic image_size must be >= 16");
  require(train_per_domain >= 1 && test_per_domain >= 1, ErrorCode::config,
          "synthetic per-split sample counts must be positive");
  for (const auto& r : domains) {
    require(!r.name.empty(), ErrorCode::config, "synthetic domain with empty name");
    require(r.shape_family == 0 || r.shape_family == 1, ErrorCode::config,
            "unknown shape family " + std::to_string(r.shape_family));
    require(r.texture >= 0 && r.texture <= 2, ErrorCode::config,
            "unknown texture id " + std::to_string(r.texture));
  }
  for (size_t i = 0; i < domains.size(); ++i)
    for (size_t k = i + 1; k < domains.size(); ++k)
      require(domains[i].name != domains[k].name, ErrorCode::config,
              "duplicate synthetic domain name '" + domains[i].name + "'");
}

SyntheticSpec SyntheticSpec::two_domain_default() {
  SyntheticSpec spec;
  DomainRecipe alpha;
  alpha.name = "alpha";
  alpha.shape_family = 0;
  alpha.palette_a = {0.10f, 0.25f, 0.75f};
  alpha.palette_b = {0.05f, 0.55f, 0.95f};
  alpha.texture = 0;
  DomainRecipe beta;
  beta.name = "beta";
  beta.shape_family = 0;
  beta.palette_a = {0.95f, 0.45f, 0.10f};
  beta.palette_b = {0.90f, 0.65f, 0.15f};
  beta.texture = 1;
  spec.domains = {alpha, beta};
  return spec;
}

SyntheticSpec SyntheticSpec::three_domain_default() {
  SyntheticSpec spec = two_domain_default();
  DomainRecipe gamma;
  gamma.name = "gamma";
  gamma.shape_family = 0;
  gamma.palette_a = {0.10f, 0.65f, 0.25f};
  gamma.palette_b = {0.30f, 0.80f, 0.20f};
  gamma.texture = 2;
  spec.domains.push_back(gamma);
  return spec;
}

std::string SyntheticSpec::to_json() const {
  json j;
  j["image_size"] = image_size;
  j["train_per_domain"] = train_per_domain;
  j["test_per_domain"] = test_per_domain;
  j["seed"] = seed;
  j["domains"] = json::array();
  for (const auto& r : domains) j["domains"].push_back(recipe_to_json(r));
  return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::config, std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  static const std::vector<std::string> known = {"image_size", "train_per_domain",
                                                 "test_per_domain", "seed", "domains"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::config,
            "unknown key in synthetic spec: " + it.key());
  SyntheticSpec spec;
  if (j.contains("image_size")) spec.image_size = j.at("image_size").get<int64_t>();
  if (j.contains("train_per_domain")) spec.train_per_domain = j.at("train_per_domain").get<int64_t>();
  if (j.contains("test_per_domain")) spec.test_per_domain = j.at("test_per_domain").get<int64_t>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<uint64_t>();
  require(j.contains("domains"), ErrorCode::config, "synthetic spec missing 'domains'");
  for (const auto& dj : j.at("domains")) spec.domains.push_back(recipe_from_json(dj));
  spec.validate();
  return spec;
}

ImageU8 render_synthetic_sample(const SyntheticSpec& spec, int64_t domain_index, bool train_split,
                                int64_t sample_index) {
  const DomainRecipe& recipe = spec.domains[static_cast<size_t>(domain_index)];
  Rng rng(sample_seed(spec.seed, domain_index, train_split, sample_index));
  int64_t s = spec.image_size;

  // Content: geometry shared across domains.
  double cx = rng.uniform(0.32, 0.68) * s;
  double cy = rng.uniform(0.32, 0.68) * s;
  double rx = rng.uniform(0.16, 0.30) * s;
  double ry = rng.uniform(0.16, 0.30) * s;
  double theta = rng.uniform(0.0, M_PI);
  double bg_jitter = rng.uniform(-0.05, 0.05);

  // Style: palette position and texture parameters.
  float t = static_cast<float>(rng.uniform());
  std::array<float, 3> fill = lerp_color(recipe.palette_a, recipe.palette_b, t);
  std::array<float, 3> fill_dark = {fill[0] * 0.35f, fill[1] * 0.35f, fill[2] * 0.35f};
  double period = rng.uniform(5.0, 9.0) * s / 64.0;
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  double dot_spacing = rng.uniform(6.0, 10.0) * s / 64.0;

  std::array<float, 3> bg = {clamp01(0.93f + static_cast<float>(bg_jitter)),
                             clamp01(0.91f + static_cast<float>(bg_jitter)),
                             clamp01(0.88f + static_cast<float>(bg_jitter))};

  double ct = std::cos(theta), st = std::sin(theta);
  ImageU8 img;
  img.width = s;
  img.height = s;
  img.pixels.resize(static_cast<size_t>(s) * s * 3);

  for (int64_t y = 0; y < s; ++y) {
    for (int64_t x = 0; x < s; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double u = ct * dx + st * dy;
      double v = -st * dx + ct * dy;
      double dist;
      if (recipe.shape_family == 0) {
        double q = std::sqrt((u / rx) * (u / rx) + (v / ry) * (v / ry));
        dist = (q - 1.0) * std::min(rx, ry);
      } else {
        double corner = 0.2 * std::min(rx, ry);
        double qx = std::abs(u) - rx + corner;
        double qy = std::abs(v) - ry + corner;
        double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
        dist = std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0) - corner;
      }
      float alpha = static_cast<float>(std::min(1.0, std::max(0.0, 0.5 - dist)));

      std::array<float, 3> color = fill;
      if (recipe.texture == 1) {
        float stripe =
            0.5f + 0.5f * static_cast<float>(std::sin(2.0 * M_PI * u / period + phase));
        color = lerp_color(fill_dark, fill, stripe);
      } else if (recipe.texture == 2) {
        double gx = u - std::floor(u / dot_spacing + 0.5) * dot_spacing;
        double gy = v - std::floor(v / dot_spacing + 0.5) * dot_spacing;
        double dot_r = 0.30 * dot_spacing;
        double dd = std::sqrt(gx * gx + gy * gy) - dot_r;
        float in_dot = static_cast<float>(std::min(1.0, std::max(0.0, 0.5 - dd)));
        color = lerp_color(fill, fill_dark, in_dot);
      }

      for (int c = 0; c < 3; ++c) {
        float val = bg[static_cast<size_t>(c)] * (1.0f - alpha) + color[static_cast<size_t>(c)] * alpha;
        img.pixels[(y * s + x) * 3 + c] = static_cast<uint8_t>(std::lround(clamp01(val) * 255.0f));
      }
    }
  }
  return img;
}

namespace {

// Downsampled-pixel features for the separability probe.
std::vector<float> probe_features(const ImageU8& img) {
  ImageU8 small = resize_bilinear(img, 4, 4);
  std::vector<float> f;
  f.reserve(49);
  for (uint8_t px : small.pixels) f.push_back(static_cast<float>(px) / 255.0f - 0.5f);
  f.push_back(1.0f);  // bias
  return f;
}

void check_pairwise_separability(const SyntheticSpec& spec) {
  int64_t per_domain = std::min<int64_t>(spec.train_per_domain, 64);
  std::vector<std::vector<std::vector<float>>> feats(spec.domains.size());
  for (size_t d = 0; d < spec.domains.size(); ++d)
    for (int64_t i = 0; i < per_domain; ++i)
      feats[d].push_back(probe_features(
          render_synthetic_sample(spec, static_cast<int64_t>(d), true, i)));

  size_t dim = feats[0][0].size();
  for (size_t a = 0; a < spec.domains.size(); ++a) {
    for (size_t b = a + 1; b < spec.domains.size(); ++b) {
      std::vector<float> w(dim, 0.0f);
      // logistic regression, plain gradient descent
      for (int iter = 0; iter < 200; ++iter) {
        std::vector<float> grad(dim, 0.0f);
        for (int side = 0; side < 2; ++side) {
          const auto& rows = side == 0 ? feats[a] : feats[b];
          float label = side == 0 ? 1.0f : -1.0f;
          for (const auto& f : rows) {
            float z = 0.0f;
            for (size_t k = 0; k < dim; ++k) z += w[k] * f[k];
            float p = 1.0f / (1.0f + std::exp(-label * z));
            float coef = -(1.0f - p) * label;
            for (size_t k = 0; k < dim; ++k) grad[k] += coef * f[k];
          }
        }
        float lr = 2.0f / static_cast<float>(feats[a].size() + feats[b].size());
        for (size_t k = 0; k < dim; ++k) w[k] -= lr * grad[k];
      }
      int64_t correct = 0, total = 0;
      for (int side = 0; side < 2; ++side) {
        const auto& rows = side == 0 ? feats[a] : feats[b];
        float label = side == 0 ? 1.0f : -1.0f;
        for (const auto& f : rows) {
          float z = 0.0f;
          for (size_t k = 0; k < dim; ++k) z += w[k] * f[k];
          correct += (z * label > 0.0f) ? 1 : 0;
          ++total;
        }
      }
      double acc = static_cast<double>(correct) / static_cast<double>(total);
      require(acc >= 0.95, ErrorCode::dataset,
              "synthetic recipes '" + spec.domains[a].name + "' and '" + spec.domains[b].name +
                  "' are not linearly separable (probe accuracy " + std::to_string(acc) + ")");
    }
  }
}

}  // namespace

MultiDomainDataset make_synthetic(const SyntheticSpec& spec, const std::string& out_path) {
  spec.validate();
  check_pairwise_separability(spec);

  fs::path root(out_path);
  std::error_code ec;
  fs::create_directories(root, ec);
  require(!ec && fs::is_directory(root), ErrorCode::io,
          "cannot create synthetic dataset directory " + out_path);

  for (int split = 0; split < 2; ++split) {
    bool train = split == 0;
    int64_t count = train ? spec.train_per_domain : spec.test_per_domain;
    for (size_t d = 0; d < spec.domains.size(); ++d) {
      fs::path dir = root / (train ? "train" : "test") / spec.domains[d].name;
      fs::create_directories(dir, ec);
      require(!ec, ErrorCode::io, "cannot create directory " + dir.string());
      for (int64_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05lld.png", static_cast<long long>(i));
        ImageU8 img = render_synthetic_sample(spec, static_cast<int64_t>(d), train, i);
        encode_png((dir / name).string(), img);
      }
    }
  }
  return load_dataset(out_path);
}

}  // namespace sologan
