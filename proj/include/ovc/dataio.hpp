#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovc/geometry.hpp"
#include "ovc/profile.hpp"

namespace ovc::data {

/// Raised for malformed, truncated or inconsistent dataset files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RatingVotes {
  std::array<std::uint64_t, kNumBuckets> counts{};
  friend bool operator==(const RatingVotes&, const RatingVotes&) = default;
};

struct RatingDistribution {
  std::array<double, kNumBuckets> p{};
  friend bool operator==(const RatingDistribution&, const RatingDistribution&) = default;
};

/// p_j = c_j / sum(c).
inline RatingDistribution normalize_votes(const RatingVotes& votes) {
  const std::uint64_t total = std::accumulate(votes.counts.begin(), votes.counts.end(), std::uint64_t{0});
  if (total == 0) throw std::invalid_argument("normalize_votes: all vote counts are zero");
  RatingDistribution d;
  for (std::size_t j = 0; j < kNumBuckets; ++j)
    d.p[j] = static_cast<double>(votes.counts[j]) / static_cast<double>(total);
  return d;
}

struct RegionRecord {
  geometry::Box box;
  double confidence = 0.0;
  std::string category;
  std::vector<std::string> attributes;
  std::vector<double> feature;
  bool padded = false;

  friend bool operator==(const RegionRecord&, const RegionRecord&) = default;
};

struct ImageRecord {
  std::string id;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::string semantic_category;
  Split split = Split::train;
  std::vector<double> global_feature;  // narrow, length d_g; may be empty
  std::vector<double> global_grid;     // wide, 5 x 5 x d_g position-major; may be empty
  std::vector<RegionRecord> regions;
  RatingVotes votes;

  RatingDistribution distribution() const { return normalize_votes(votes); }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Dataset {
  Profile profile = Profile::desk;
  std::vector<ImageRecord> records;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Keeps the `kNumRegions` most confident detections. Shortfalls are filled by
/// copies of the most confident region, flagged as padding.
inline std::vector<RegionRecord> canonicalize_regions(std::vector<RegionRecord> regions) {
  if (regions.empty()) throw std::invalid_argument("canonicalize_regions: image has no detected regions");
  std::stable_sort(regions.begin(), regions.end(),
                   [](const RegionRecord& a, const RegionRecord& b) { return a.confidence > b.confidence; });
  if (regions.size() > kNumRegions) regions.resize(kNumRegions);
  const RegionRecord top = regions.front();
  while (regions.size() < kNumRegions) {
    regions.push_back(top);
    regions.back().padded = true;
  }
  return regions;
}

/// Throws FormatError naming the record when an invariant does not hold.
inline void validate_record(const ImageRecord& r, const ProfileDims& dims) {
  auto fail = [&](const std::string& what) { throw FormatError("record " + r.id + ": " + what); };
  if (r.id.empty()) throw FormatError("record with empty id");
  if (r.width == 0 || r.height == 0) fail("image size must be positive");
  if (r.regions.size() != kNumRegions) {
    fail("expected " + std::to_string(kNumRegions) + " regions, got " + std::to_string(r.regions.size()));
  }
  if (std::accumulate(r.votes.counts.begin(), r.votes.counts.end(), std::uint64_t{0}) == 0) fail("all votes are zero");
  if (r.global_feature.empty() && r.global_grid.empty()) fail("no global feature");
  if (!r.global_feature.empty() && r.global_feature.size() != dims.global_dim) {
    fail("global feature length " + std::to_string(r.global_feature.size()) + ", expected " +
         std::to_string(dims.global_dim));
  }
  if (!r.global_grid.empty() && r.global_grid.size() != dims.global_dim * dims.grid_cells()) {
    fail("wide global feature length " + std::to_string(r.global_grid.size()) + ", expected " +
         std::to_string(dims.global_dim * dims.grid_cells()));
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(r.global_feature) || !finite(r.global_grid)) fail("non-finite value in global feature");
  for (std::size_t i = 0; i < r.regions.size(); ++i) {
    const RegionRecord& reg = r.regions[i];
    const std::string where = "region " + std::to_string(i) + ": ";
    if (reg.feature.size() != dims.regional_dim) {
      fail(where + "feature length " + std::to_string(reg.feature.size()) + ", expected " +
           std::to_string(dims.regional_dim));
    }
    if (!finite(reg.feature)) fail(where + "non-finite value in feature");
    const auto& b = reg.box;
    for (double c : {b.x_tl, b.y_tl, b.x_br, b.y_br})
      if (!(c >= 0.0 && c <= 1.0)) fail(where + "box coordinate outside [0, 1]");
    if (!b.valid()) fail(where + "box corners out of order");
    if (!(reg.confidence >= 0.0 && reg.confidence <= 1.0)) fail(where + "confidence outside [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// On-disk format
//
// Feature blob:   "OVCBLOB\0" | u32 version | u32 reserved | float32 LE runs
// Manifest:       JSON lines; line 1 is the header, then one line per record.
//                 Offsets are absolute byte offsets into the blob, lengths
//                 count floats.

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::string_view kBlobMagic{"OVCBLOB\0", 8};
inline constexpr std::size_t kBlobHeaderBytes = 16;
inline constexpr std::string_view kManifestFormat = "ovc-manifest";

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

struct BlobWriter {
  std::string bytes;

  BlobWriter() {
    bytes.append(kBlobMagic);
    put_u32(bytes, kFormatVersion);
    put_u32(bytes, 0);
  }

  nlohmann::ordered_json append(const std::vector<double>& values) {
    nlohmann::ordered_json ref;
    ref["offset"] = bytes.size();
    ref["length"] = values.size();
    for (double v : values) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return ref;
  }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace detail

struct EncodedDataset {
  std::string manifest;
  std::string blob;
};

/// Canonical byte encoding; identical input yields identical bytes.
inline EncodedDataset encode_dataset(const Dataset& ds) {
  const ProfileDims& dims = dims_for(ds.profile);
  detail::BlobWriter blob;
  std::string body;
  for (const ImageRecord& r : ds.records) {
    validate_record(r, dims);
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["width"] = r.width;
    j["height"] = r.height;
    j["category"] = r.semantic_category;
    j["split"] = std::string(to_string(r.split));
    j["votes"] = r.votes.counts;
    j["global"] = r.global_feature.empty() ? nlohmann::ordered_json(nullptr) : blob.append(r.global_feature);
    j["global_wide"] = r.global_grid.empty() ? nlohmann::ordered_json(nullptr) : blob.append(r.global_grid);
    auto regions = nlohmann::ordered_json::array();
    for (const RegionRecord& reg : r.regions) {
      nlohmann::ordered_json jr;
      jr["box"] = {reg.box.x_tl, reg.box.y_tl, reg.box.x_br, reg.box.y_br};
      jr["confidence"] = reg.confidence;
      jr["category"] = reg.category;
      jr["attributes"] = reg.attributes;
      jr["padded"] = reg.padded;
      jr["feature"] = blob.append(reg.feature);
      regions.push_back(std::move(jr));
    }
    j["regions"] = std::move(regions);
    body += j.dump();
    body += '\n';
  }
  nlohmann::ordered_json header;
  header["format"] = kManifestFormat;
  header["version"] = kFormatVersion;
  header["profile"] = std::string(to_string(ds.profile));
  header["global_dim"] = dims.global_dim;
  header["regional_dim"] = dims.regional_dim;
  header["grid_side"] = kGridSide;
  header["records"] = ds.records.size();
  header["blob_bytes"] = blob.bytes.size();
  header["blob_checksum"] =
      "fnv1a64:" + detail::hex64(detail::fnv1a64(std::string_view(blob.bytes).substr(kBlobHeaderBytes)));
  return {header.dump() + "\n" + body, std::move(blob.bytes)};
}

inline Dataset decode_dataset(std::string_view manifest, std::string_view blob) {
  if (blob.size() < kBlobHeaderBytes || blob.substr(0, 8) != kBlobMagic) {
    throw FormatError("feature blob: bad magic bytes");
  }
  if (const auto v = detail::get_u32(blob, 8); v != kFormatVersion) {
    throw FormatError("feature blob: unsupported version " + std::to_string(v));
  }

  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < manifest.size();) {
    auto nl = manifest.find('\n', pos);
    if (nl == std::string_view::npos) nl = manifest.size();
    if (nl > pos) lines.push_back(manifest.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty()) throw FormatError("manifest: missing header line");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(lines[0]);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest header: ") + e.what());
  }
  if (header.value("format", "") != kManifestFormat) throw FormatError("manifest: not an ovc-manifest file");
  if (header.value("version", 0u) != kFormatVersion) {
    throw FormatError("manifest: unsupported version " + header.value("version", nlohmann::json()).dump());
  }

  Dataset ds;
  try {
    ds.profile = parse_profile(header.at("profile").get<std::string>());
  } catch (const std::exception& e) {
    throw FormatError(std::string("manifest header: ") + e.what());
  }
  const ProfileDims& dims = dims_for(ds.profile);
  if (header.value("global_dim", 0u) != dims.global_dim || header.value("regional_dim", 0u) != dims.regional_dim ||
      header.value("grid_side", 0u) != kGridSide) {
    throw FormatError("manifest header: feature dims do not match profile " + std::string(to_string(ds.profile)));
  }
  const std::size_t declared = header.value("records", std::size_t{0});
  if (declared != lines.size() - 1) {
    throw FormatError("manifest: header declares " + std::to_string(declared) + " records, found " +
                      std::to_string(lines.size() - 1));
  }

  std::vector<std::pair<std::size_t, std::size_t>> spans;
  auto read_run = [&](const nlohmann::json& ref, const std::string& id) {
    const auto offset = ref.at("offset").get<std::size_t>();
    const auto length = ref.at("length").get<std::size_t>();
    if (offset < kBlobHeaderBytes || (offset - kBlobHeaderBytes) % 4 != 0 || offset + 4 * length > blob.size()) {
      throw FormatError("record " + id + ": feature run at byte offset " + std::to_string(offset) + " (" +
                        std::to_string(length) + " floats) exceeds blob of " + std::to_string(blob.size()) +
                        " bytes");
    }
    spans.emplace_back(offset, offset + 4 * length);
    std::vector<double> v(length);
    for (std::size_t k = 0; k < length; ++k)
      v[k] = static_cast<double>(std::bit_cast<float>(detail::get_u32(blob, offset + 4 * k)));
    return v;
  };

  ds.records.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    ImageRecord r;
    try {
      const auto j = nlohmann::json::parse(lines[li]);
      r.id = j.at("id").get<std::string>();
      r.width = j.at("width").get<std::uint32_t>();
      r.height = j.at("height").get<std::uint32_t>();
      r.semantic_category = j.at("category").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      const auto votes = j.at("votes").get<std::vector<std::uint64_t>>();
      if (votes.size() != kNumBuckets) throw FormatError("expected 10 vote buckets");
      std::copy(votes.begin(), votes.end(), r.votes.counts.begin());
      if (!j.at("global").is_null()) r.global_feature = read_run(j["global"], r.id);
      if (!j.at("global_wide").is_null()) r.global_grid = read_run(j["global_wide"], r.id);
      for (const auto& jr : j.at("regions")) {
        RegionRecord reg;
        const auto box = jr.at("box").get<std::vector<double>>();
        if (box.size() != 4) throw FormatError("box needs 4 coordinates");
        reg.box = {box[0], box[1], box[2], box[3]};
        reg.confidence = jr.at("confidence").get<double>();
        reg.category = jr.at("category").get<std::string>();
        reg.attributes = jr.at("attributes").get<std::vector<std::string>>();
        reg.padded = jr.value("padded", false);
        reg.feature = read_run(jr.at("feature"), r.id);
        r.regions.push_back(std::move(reg));
      }
    } catch (const FormatError& e) {
      if (std::string_view(e.what()).starts_with("record ")) throw;
      throw FormatError("record " + (r.id.empty() ? "#" + std::to_string(li) : r.id) + ": " + e.what());
    } catch (const std::exception& e) {
      throw FormatError("record " + (r.id.empty() ? "#" + std::to_string(li) : r.id) + ": " + e.what());
    }
    validate_record(r, dims);
    ds.records.push_back(std::move(r));
  }

  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i)
    if (spans[i].first < spans[i - 1].second) {
      throw FormatError("feature blob: overlapping runs at byte offset " + std::to_string(spans[i].first));
    }
  if (header.value("blob_bytes", std::size_t{0}) != blob.size()) {
    throw FormatError("feature blob: expected " + std::to_string(header.value("blob_bytes", std::size_t{0})) +
                      " bytes, found " + std::to_string(blob.size()));
  }
  const std::string checksum =
      "fnv1a64:" + detail::hex64(detail::fnv1a64(blob.substr(kBlobHeaderBytes)));
  if (header.value("blob_checksum", "") != checksum) throw FormatError("feature blob: checksum mismatch");
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& manifest_path,
                          const std::filesystem::path& blob_path) {
  const EncodedDataset enc = encode_dataset(ds);
  detail::write_file(manifest_path, enc.manifest);
  detail::write_file(blob_path, enc.blob);
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path) {
  return decode_dataset(detail::read_file(manifest_path), detail::read_file(blob_path));
}

inline constexpr std::string_view kManifestName = "manifest.jsonl";
inline constexpr std::string_view kBlobName = "features.bin";

/// Directory layout used by the command-line tool.
inline void write_dataset_dir(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset(ds, dir / kManifestName, dir / kBlobName);
}

inline Dataset load_dataset_dir(const std::filesystem::path& dir) {
  return load_dataset(dir / kManifestName, dir / kBlobName);
}

}  // namespace ovc::data
