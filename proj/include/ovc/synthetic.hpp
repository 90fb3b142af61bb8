#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ovc/dataio.hpp"
#include "ovc/geometry.hpp"
#include "ovc/profile.hpp"

// Seeded stand-in for the detector + feature-extractor stage. Aesthetic scores
// are driven by three latent sources that the network can only reach through
// different paths:
//   * quality of "subject" regions (visible in region features),
//   * image-level quality (visible only in the global feature),
//   * quality of the region spatially closest to each subject (needs boxes).

namespace ovc::data {

struct PlantConfig {
  std::string label;         // object category or attribute name
  double correlation = 0.0;  // target association between the planted signal and the score
};

struct SynthOptions {
  bool narrow = true;          // emit the pooled global feature
  bool wide = true;            // emit the 5 x 5 global grid
  double test_fraction = 0.2;  // every k-th record goes to the test split
  std::optional<PlantConfig> plant;
};

inline const std::vector<std::string>& object_vocabulary() {
  static const std::vector<std::string> v{"eye",  "face",  "mouth",    "flower", "bird", "dog",    "ear",
                                          "nose", "person", "sky",     "cloud",  "tree", "grass",  "water",
                                          "building", "car", "road",   "window", "table", "background"};
  return v;
}

inline const std::vector<std::string>& subject_vocabulary() {
  static const std::vector<std::string> v{"eye", "face", "mouth", "flower", "bird", "dog"};
  return v;
}

inline const std::vector<std::string>& attribute_vocabulary() {
  static const std::vector<std::string> v{"blurry", "green", "blue",  "white", "dark",
                                          "bright", "red",   "small", "large", "wooden"};
  return v;
}

inline const std::vector<std::string>& image_categories() {
  static const std::vector<std::string> v{"portrait", "animal", "floral", "landscape", "cityscape", "generic"};
  return v;
}

/// Fixed directions in feature space shared by every synthetic dataset of a
/// profile (independent of the dataset seed).
struct SyntheticBasis {
  std::vector<std::vector<double>> object_embedding;     // per object label, length d_r
  std::vector<std::vector<double>> attribute_embedding;  // per attribute, length d_r
  std::vector<double> quality_direction;                 // length d_r
  std::vector<double> plant_direction;                   // length d_r
  std::vector<double> global_quality_direction;          // length d_g
};

inline SyntheticBasis synthetic_basis(Profile profile) {
  const ProfileDims& dims = dims_for(profile);
  std::mt19937_64 rng(0x0bc5eedULL);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto draw = [&](std::size_t len, double scale) {
    std::vector<double> v(len);
    for (double& x : v) x = scale * n01(rng);
    return v;
  };
  SyntheticBasis b;
  for (std::size_t i = 0; i < object_vocabulary().size(); ++i) b.object_embedding.push_back(draw(dims.regional_dim, 0.6));
  for (std::size_t i = 0; i < attribute_vocabulary().size(); ++i)
    b.attribute_embedding.push_back(draw(dims.regional_dim, 0.3));
  b.quality_direction = draw(dims.regional_dim, 0.5);
  b.plant_direction = draw(dims.regional_dim, 0.5);
  b.global_quality_direction = draw(dims.global_dim, 0.5);
  return b;
}

namespace detail {

inline double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

inline RatingVotes votes_from_gaussian(double mu, double sigma, std::uint64_t total) {
  std::array<double, kNumBuckets> w{};
  double z = 0.0;
  for (std::size_t j = 0; j < kNumBuckets; ++j) {
    const double d = (static_cast<double>(j + 1) - mu) / sigma;
    w[j] = std::exp(-0.5 * d * d);
    z += w[j];
  }
  RatingVotes votes;
  std::uint64_t sum = 0;
  for (std::size_t j = 0; j < kNumBuckets; ++j) {
    votes.counts[j] = static_cast<std::uint64_t>(std::llround(w[j] / z * static_cast<double>(total)));
    sum += votes.counts[j];
  }
  if (sum == 0) votes.counts[static_cast<std::size_t>(std::clamp(std::lround(mu) - 1, 0L, 9L))] = 1;
  return votes;
}

}  // namespace detail

/// Pure function of (seed, n, profile, options).
inline Dataset generate_synthetic(std::uint64_t seed, std::size_t n, Profile profile, const SynthOptions& opts = {}) {
  if (n == 0) throw std::invalid_argument("generate_synthetic: n must be at least 1");
  if (!opts.narrow && !opts.wide) throw std::invalid_argument("generate_synthetic: need a narrow or wide global feature");
  if (opts.plant && std::abs(opts.plant->correlation) > 1.0) {
    throw std::invalid_argument("generate_synthetic: planted correlation must lie in [-1, 1]");
  }
  const ProfileDims& dims = dims_for(profile);
  const SyntheticBasis basis = synthetic_basis(profile);
  const auto& objects = object_vocabulary();
  const auto& attributes = attribute_vocabulary();
  const std::size_t n_subjects = subject_vocabulary().size();

  const bool plant_is_attribute =
      opts.plant && std::find(attributes.begin(), attributes.end(), opts.plant->label) != attributes.end();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto pick = [&](std::size_t count) { return std::uniform_int_distribution<std::size_t>(0, count - 1)(rng); };

  const std::size_t test_every =
      opts.test_fraction > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / opts.test_fraction)))
                               : 0;

  Dataset ds;
  ds.profile = profile;
  ds.records.reserve(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    ImageRecord r;
    char id[64];
    std::snprintf(id, sizeof id, "syn-%llu-%05zu", static_cast<unsigned long long>(seed), idx);
    r.id = id;
    r.width = 640 + static_cast<std::uint32_t>(pick(385));
    r.height = 480 + static_cast<std::uint32_t>(pick(545));
    r.semantic_category = image_categories()[pick(image_categories().size())];
    r.split = (test_every && idx % test_every == test_every - 1) ? Split::test : Split::train;

    // Regions: 1-3 subjects, the rest context objects.
    const std::size_t subject_count = 1 + pick(3);
    struct Latent {
      std::size_t label;
      double quality;
      double planted;
      bool has_plant;
    };
    std::vector<RegionRecord> regions(kNumRegions);
    std::vector<Latent> latent(kNumRegions);
    std::vector<double> conf(kNumRegions);
    for (double& c : conf) c = 0.3 + 0.7 * u01(rng);
    std::sort(conf.begin(), conf.end(), std::greater<>());
    std::vector<std::size_t> order(kNumRegions);
    for (std::size_t i = 0; i < kNumRegions; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t k = 0; k < kNumRegions; ++k) {
      const std::size_t slot = order[k];
      const bool subject = k < subject_count;
      const std::size_t label = subject ? pick(n_subjects) : n_subjects + pick(objects.size() - n_subjects);
      RegionRecord& reg = regions[slot];
      reg.category = objects[label];
      reg.confidence = detail::to_float_precision(conf[slot]);
      const double w = subject ? 0.2 + 0.3 * u01(rng) : 0.08 + 0.25 * u01(rng);
      const double h = subject ? 0.2 + 0.3 * u01(rng) : 0.08 + 0.25 * u01(rng);
      const double x = (1.0 - w) * u01(rng), y = (1.0 - h) * u01(rng);
      reg.box = {x, y, x + w, y + h};
      const std::size_t n_attr = pick(3);
      for (std::size_t a = 0; a < n_attr; ++a) {
        const auto& name = attributes[pick(attributes.size())];
        if (std::find(reg.attributes.begin(), reg.attributes.end(), name) == reg.attributes.end())
          reg.attributes.push_back(name);
      }
      latent[slot] = {label, n01(rng), 0.0, false};
    }
    if (opts.plant && u01(rng) < 0.5) {
      const std::size_t slot = order[subject_count + pick(kNumRegions - subject_count)];
      if (plant_is_attribute) {
        auto& attrs = regions[slot].attributes;
        if (std::find(attrs.begin(), attrs.end(), opts.plant->label) == attrs.end()) attrs.push_back(opts.plant->label);
      } else {
        regions[slot].category = opts.plant->label;
      }
    }

    double planted_sum = 0.0;
    std::size_t planted_count = 0;
    for (std::size_t s = 0; s < kNumRegions; ++s) {
      RegionRecord& reg = regions[s];
      Latent& lt = latent[s];
      if (opts.plant) {
        lt.has_plant = reg.category == opts.plant->label ||
                       std::find(reg.attributes.begin(), reg.attributes.end(), opts.plant->label) != reg.attributes.end();
        if (lt.has_plant) {
          lt.planted = n01(rng);
          planted_sum += lt.planted;
          ++planted_count;
        }
      }
      reg.feature.assign(dims.regional_dim, 0.0);
      const auto label_it = std::find(objects.begin(), objects.end(), reg.category);
      for (std::size_t d = 0; d < dims.regional_dim; ++d) {
        double v = lt.quality * basis.quality_direction[d] + 0.3 * n01(rng);
        if (label_it != objects.end()) v += basis.object_embedding[static_cast<std::size_t>(label_it - objects.begin())][d];
        for (const auto& a : reg.attributes) {
          const auto it = std::find(attributes.begin(), attributes.end(), a);
          if (it != attributes.end()) v += basis.attribute_embedding[static_cast<std::size_t>(it - attributes.begin())][d];
        }
        if (lt.has_plant) v += 1.6 * lt.planted * basis.plant_direction[d];
        reg.feature[d] = detail::to_float_precision(v);
      }
      reg.box = {detail::to_float_precision(reg.box.x_tl), detail::to_float_precision(reg.box.y_tl),
                 std::min(1.0, detail::to_float_precision(reg.box.x_br)),
                 std::min(1.0, detail::to_float_precision(reg.box.y_br))};
    }

    // Latent score components, each with unit variance.
    double subject_term = 0.0, relation_term = 0.0;
    std::size_t subjects_seen = 0;
    for (std::size_t s = 0; s < kNumRegions; ++s) {
      if (latent[s].label >= n_subjects) continue;
      ++subjects_seen;
      subject_term += latent[s].quality;
      std::size_t nearest = s;
      double best = 1e9;
      for (std::size_t o = 0; o < kNumRegions; ++o) {
        if (o == s) continue;
        const double d = geometry::center_distance(regions[s].box, regions[o].box);
        if (d < best) best = d, nearest = o;
      }
      relation_term += latent[nearest].quality;
    }
    const double norm = std::sqrt(static_cast<double>(std::max<std::size_t>(subjects_seen, 1)));
    subject_term /= norm;
    relation_term /= norm;
    const double global_quality = n01(rng);
    double z = (0.6 * subject_term + 0.5 * global_quality + 0.5 * relation_term + 0.3 * n01(rng)) / std::sqrt(0.95);
    if (planted_count > 0) {
      const double rho = opts.plant->correlation;
      const double planted = planted_sum / std::sqrt(static_cast<double>(planted_count));
      z = rho * planted + std::sqrt(1.0 - rho * rho) * z;
    }
    const double mu = std::clamp(5.4 + 1.1 * z, 1.5, 9.5);
    const double sigma = 1.2 + 0.3 * u01(rng);
    r.votes = detail::votes_from_gaussian(mu, sigma, 120 + pick(181));

    // Global feature: per-image content vector plus the global quality signal,
    // spread over a 5 x 5 grid; the narrow feature is its spatial average.
    std::vector<double> content(dims.global_dim);
    for (double& c : content) c = 0.5 * n01(rng);
    std::vector<double> grid(dims.grid_cells() * dims.global_dim);
    for (std::size_t cell = 0; cell < dims.grid_cells(); ++cell)
      for (std::size_t d = 0; d < dims.global_dim; ++d)
        grid[cell * dims.global_dim + d] = detail::to_float_precision(
            content[d] + global_quality * basis.global_quality_direction[d] + 0.3 * n01(rng));
    if (opts.narrow) {
      r.global_feature.assign(dims.global_dim, 0.0);
      for (std::size_t cell = 0; cell < dims.grid_cells(); ++cell)
        for (std::size_t d = 0; d < dims.global_dim; ++d) r.global_feature[d] += grid[cell * dims.global_dim + d];
      for (double& v : r.global_feature) v = detail::to_float_precision(v / static_cast<double>(dims.grid_cells()));
    }
    if (opts.wide) r.global_grid = std::move(grid);
    r.regions = std::move(regions);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace ovc::data
