#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovc/dataio.hpp"
#include "ovc/metrics.hpp"
#include "ovc/model.hpp"

// Per-image record of what a trained model attended to. Written as JSONL: a
// header line, then one line per image.

namespace ovc::interpret {

struct RegionAttention {
  std::string category;
  std::vector<std::string> attributes;
  double attention = 0.0;  // object-level a_i
  bool padded = false;

  friend bool operator==(const RegionAttention&, const RegionAttention&) = default;
};

struct ImageAttention {
  std::string id;
  Split split = Split::train;
  std::string semantic_category;
  double predicted_mean = 0.0;
  double truth_mean = 0.0;
  std::vector<RegionAttention> regions;
  /// Row-major alpha_ij (central i, neighbour j); empty without graph attention.
  std::vector<double> alpha;

  double alpha_at(std::size_t i, std::size_t j) const { return alpha[i * regions.size() + j]; }

  friend bool operator==(const ImageAttention&, const ImageAttention&) = default;
};

struct AttentionLog {
  std::vector<ImageAttention> images;

  friend bool operator==(const AttentionLog&, const AttentionLog&) = default;
};

inline constexpr std::string_view kLogFormat = "ovc-attention-log";

inline void validate(const ImageAttention& im) {
  const std::size_t n = im.regions.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = im.regions[i].attention;
    if (!(a > 0.0 && a < 1.0)) {
      throw std::invalid_argument("image " + im.id + ": region " + std::to_string(i) + " attention " +
                                  std::to_string(a) + " outside (0,1)");
    }
  }
  if (im.alpha.empty()) return;
  if (im.alpha.size() != n * n) {
    throw std::invalid_argument("image " + im.id + ": alpha has " + std::to_string(im.alpha.size()) +
                                " entries for " + std::to_string(n) + " regions");
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += im.alpha_at(i, j);
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("image " + im.id + ": alpha row " + std::to_string(i) + " sums to " +
                                  std::to_string(s));
    }
  }
}

inline void write_log(const AttentionLog& log, std::ostream& out) {
  for (const auto& im : log.images) validate(im);
  nlohmann::ordered_json h;
  h["format"] = kLogFormat;
  h["version"] = 1;
  h["images"] = log.images.size();
  out << h.dump() << '\n';
  for (const auto& im : log.images) {
    nlohmann::ordered_json j;
    j["id"] = im.id;
    j["split"] = to_string(im.split);
    j["category"] = im.semantic_category;
    j["predicted_mean"] = im.predicted_mean;
    j["truth_mean"] = im.truth_mean;
    auto regions = nlohmann::ordered_json::array();
    for (const auto& r : im.regions) {
      nlohmann::ordered_json rj;
      rj["category"] = r.category;
      rj["attributes"] = r.attributes;
      rj["attention"] = r.attention;
      rj["padded"] = r.padded;
      regions.push_back(std::move(rj));
    }
    j["regions"] = std::move(regions);
    j["alpha"] = im.alpha;
    out << j.dump() << '\n';
  }
}

inline AttentionLog read_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw data::FormatError("attention log is empty");
  std::size_t expected = 0;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != kLogFormat) throw data::FormatError("not an attention log (bad header)");
    expected = h.at("images").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw data::FormatError(std::string("attention log header: ") + e.what());
  }
  AttentionLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ImageAttention im;
      im.id = j.at("id").get<std::string>();
      im.split = parse_split(j.at("split").get<std::string>());
      im.semantic_category = j.at("category").get<std::string>();
      im.predicted_mean = j.at("predicted_mean").get<double>();
      im.truth_mean = j.at("truth_mean").get<double>();
      for (const auto& rj : j.at("regions")) {
        im.regions.push_back({rj.at("category").get<std::string>(), rj.at("attributes").get<std::vector<std::string>>(),
                              rj.at("attention").get<double>(), rj.value("padded", false)});
      }
      im.alpha = j.at("alpha").get<std::vector<double>>();
      validate(im);
      log.images.push_back(std::move(im));
    } catch (const nlohmann::json::exception& e) {
      throw data::FormatError("attention log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw data::FormatError("attention log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (log.images.size() != expected) {
    throw data::FormatError("attention log header promises " + std::to_string(expected) + " images, found " +
                            std::to_string(log.images.size()));
  }
  return log;
}

inline void save_log(const AttentionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_log(log, out);
}

inline AttentionLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_log(in);
}

/// Runs a model with object-level attention over every record of `ds`.
inline AttentionLog export_attention(const model::Model& m, const data::Dataset& ds, std::size_t batch_size = 64) {
  if (m.config.arm == model::ModelArm::baseline) {
    throw std::invalid_argument("export_attention: the baseline arm has no attention to export");
  }
  AttentionLog log;
  for (std::size_t start = 0; start < ds.records.size(); start += batch_size) {
    std::vector<const data::ImageRecord*> chunk;
    for (std::size_t i = start; i < std::min(ds.records.size(), start + batch_size); ++i) chunk.push_back(&ds.records[i]);
    ad::Tape tape;
    model::Graph g = model::Graph::inference(tape, m);
    const auto out = model::forward(g, model::make_batch(chunk, m.config));
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const data::ImageRecord& r = *chunk[b];
      ImageAttention im{r.id, r.split, r.semantic_category, 0.0, metrics::dist_mean(r.distribution()), {}, {}};
      std::array<double, kNumBuckets> p{};
      for (std::size_t k = 0; k < kNumBuckets; ++k) p[k] = out.distribution.value().at(b, k);
      im.predicted_mean = metrics::dist_mean(std::span<const double>(p));
      for (std::size_t i = 0; i < kNumRegions; ++i) {
        const auto& reg = r.regions[i];
        im.regions.push_back({reg.category, reg.attributes, out.attention->value().at(b, i), reg.padded});
      }
      if (out.alpha) {
        for (std::size_t i = 0; i < kNumRegions; ++i)
          for (std::size_t j = 0; j < kNumRegions; ++j) im.alpha.push_back(out.alpha->value().at(b * kNumRegions + i, j));
      }
      log.images.push_back(std::move(im));
    }
  }
  return log;
}

}  // namespace ovc::interpret
