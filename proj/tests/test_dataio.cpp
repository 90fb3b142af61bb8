#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ovc/dataio.hpp"
#include "ovc/synthetic.hpp"

using namespace ovc;
using namespace ovc::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ovc_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t feature_floats(const Dataset& ds) {
  std::size_t n = 0;
  for (const auto& r : ds.records) {
    n += r.global_feature.size() + r.global_grid.size();
    for (const auto& reg : r.regions) n += reg.feature.size();
  }
  return n;
}

}  // namespace

TEST(NormalizeVotes, Examples) {
  RatingVotes one_hot;
  one_hot.counts[9] = 10;
  EXPECT_DOUBLE_EQ(normalize_votes(one_hot).p[9], 1.0);
  EXPECT_DOUBLE_EQ(normalize_votes(one_hot).p[0], 0.0);

  RatingVotes flat;
  flat.counts.fill(1);
  for (double p : normalize_votes(flat).p) EXPECT_DOUBLE_EQ(p, 0.1);

  RatingVotes v{{1, 3, 6}};
  const auto d = normalize_votes(v);
  EXPECT_DOUBLE_EQ(d.p[0], 0.1);
  EXPECT_DOUBLE_EQ(d.p[1], 0.3);
  EXPECT_DOUBLE_EQ(d.p[2], 0.6);

  EXPECT_THROW(normalize_votes(RatingVotes{}), std::invalid_argument);
}

TEST(NormalizeVotes, ScaleInvariantAndNormalized) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> c(0, 50);
  for (int i = 0; i < 200; ++i) {
    RatingVotes v;
    for (auto& x : v.counts) x = c(rng);
    v.counts[i % 10] += 1;
    RatingVotes scaled = v;
    for (auto& x : scaled.counts) x *= 7;
    const auto d = normalize_votes(v), ds = normalize_votes(scaled);
    double s = 0;
    for (std::size_t k = 0; k < 10; ++k) {
      EXPECT_GE(d.p[k], 0.0);
      EXPECT_DOUBLE_EQ(d.p[k], ds.p[k]);
      s += d.p[k];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CanonicalizeRegions, KeepsTopTenAndPads) {
  std::vector<RegionRecord> many(14);
  for (std::size_t i = 0; i < many.size(); ++i) {
    many[i].confidence = 0.05 * static_cast<double>(i);
    many[i].category = "obj" + std::to_string(i);
  }
  const auto top = canonicalize_regions(many);
  ASSERT_EQ(top.size(), kNumRegions);
  EXPECT_EQ(top.front().category, "obj13");
  EXPECT_EQ(top.back().category, "obj4");

  std::vector<RegionRecord> few(3);
  few[1].confidence = 0.9;
  few[1].category = "best";
  const auto padded = canonicalize_regions(few);
  ASSERT_EQ(padded.size(), kNumRegions);
  EXPECT_FALSE(padded[2].padded);
  for (std::size_t i = 3; i < kNumRegions; ++i) {
    EXPECT_TRUE(padded[i].padded);
    EXPECT_EQ(padded[i].category, "best");
  }
  EXPECT_THROW(canonicalize_regions({}), std::invalid_argument);
}

TEST(Dataset, RoundTripIsByteIdentical) {
  const Dataset ds = generate_synthetic(5, 12, Profile::desk);
  const auto dir = scratch_dir("roundtrip");
  write_dataset_dir(ds, dir);
  const Dataset back = load_dataset_dir(dir);
  EXPECT_EQ(back, ds);
  const auto first = encode_dataset(ds), second = encode_dataset(back);
  EXPECT_EQ(first.manifest, second.manifest);
  EXPECT_EQ(first.blob, second.blob);
  EXPECT_EQ(detail::read_file(dir / "features.bin"), first.blob);
}

TEST(Dataset, EmptyRecordListIsValid) {
  const Dataset empty{Profile::desk, {}};
  const auto enc = encode_dataset(empty);
  EXPECT_EQ(enc.blob.size(), kBlobHeaderBytes);
  EXPECT_EQ(decode_dataset(enc.manifest, enc.blob), empty);
}

TEST(Dataset, BlobSizeIsFeatureFloatsPlusHeader) {
  const Dataset ds = generate_synthetic(9, 32, Profile::desk);
  const auto enc = encode_dataset(ds);
  EXPECT_EQ(enc.blob.size(), kBlobHeaderBytes + 4 * feature_floats(ds));
  // desk: every record carries 10 x 32 regional, 64 narrow and 25 x 64 wide floats
  EXPECT_EQ(feature_floats(ds), 32u * (10 * 32 + 64 + 25 * 64));
}

TEST(Dataset, TruncatedBlobNamesRecordAndOffset) {
  const Dataset ds = generate_synthetic(5, 4, Profile::desk);
  const auto enc = encode_dataset(ds);
  const std::string cut = enc.blob.substr(0, enc.blob.size() - 100);
  try {
    decode_dataset(enc.manifest, cut);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("record " + ds.records.back().id), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte offset"), std::string::npos) << msg;
  }
}

TEST(Dataset, ChecksumAndMagicAreVerified) {
  const auto enc = encode_dataset(generate_synthetic(5, 3, Profile::desk));
  std::string flipped = enc.blob;
  flipped[kBlobHeaderBytes + 10] ^= 0x40;
  EXPECT_THROW(decode_dataset(enc.manifest, flipped), FormatError);
  std::string bad_magic = enc.blob;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_dataset(enc.manifest, bad_magic), FormatError);
  EXPECT_THROW(decode_dataset("", enc.blob), FormatError);
}

TEST(Dataset, NineRegionsIsRejected) {
  Dataset ds = generate_synthetic(5, 2, Profile::desk);
  ds.records[1].regions.pop_back();
  try {
    encode_dataset(ds);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 10 regions"), std::string::npos) << e.what();
  }
}

TEST(Dataset, ValidationCatchesBadRecords) {
  const ProfileDims& d = kDeskDims;
  const ImageRecord good = generate_synthetic(3, 1, Profile::desk).records[0];
  EXPECT_NO_THROW(validate_record(good, d));
  auto expect_bad = [&](auto mutate) {
    ImageRecord r = good;
    mutate(r);
    EXPECT_THROW(validate_record(r, d), FormatError);
  };
  expect_bad([](ImageRecord& r) { r.votes = {}; });
  expect_bad([](ImageRecord& r) { r.regions[0].feature.pop_back(); });
  expect_bad([](ImageRecord& r) { r.regions[2].box.x_br = 1.5; });
  expect_bad([](ImageRecord& r) { r.regions[2].box = {0.6, 0.1, 0.2, 0.3}; });
  expect_bad([](ImageRecord& r) { r.global_feature[0] = std::nan(""); });
  expect_bad([](ImageRecord& r) {
    r.global_feature.clear();
    r.global_grid.clear();
  });
}

TEST(Synthetic, SameSeedSameDataset) {
  EXPECT_EQ(generate_synthetic(7, 20, Profile::desk), generate_synthetic(7, 20, Profile::desk));
  EXPECT_NE(generate_synthetic(7, 20, Profile::desk), generate_synthetic(8, 20, Profile::desk));
}

TEST(Synthetic, RecordsAreValidAndSplit) {
  const Dataset ds = generate_synthetic(1, 50, Profile::desk);
  std::size_t test = 0;
  for (const auto& r : ds.records) {
    EXPECT_NO_THROW(validate_record(r, kDeskDims));
    test += r.split == Split::test;
    for (const auto& reg : r.regions) {
      const auto& vocab = object_vocabulary();
      EXPECT_NE(std::find(vocab.begin(), vocab.end(), reg.category), vocab.end());
    }
  }
  EXPECT_EQ(test, 10u);
}

TEST(Synthetic, PlantedLabelAssociatesWithScore) {
  SynthOptions opts;
  opts.plant = PlantConfig{"blurry", -0.8};
  const Dataset ds = generate_synthetic(2, 600, Profile::desk, opts);
  const auto basis = synthetic_basis(Profile::desk);
  // Projection of each planted region's feature on the plant direction vs the image mean score.
  std::vector<double> proj, score;
  for (const auto& r : ds.records) {
    const auto dist = r.distribution();
    double mu = 0;
    for (std::size_t k = 0; k < 10; ++k) mu += static_cast<double>(k + 1) * dist.p[k];
    for (const auto& reg : r.regions) {
      if (std::find(reg.attributes.begin(), reg.attributes.end(), "blurry") == reg.attributes.end()) continue;
      double dot = 0;
      for (std::size_t k = 0; k < reg.feature.size(); ++k) dot += reg.feature[k] * basis.plant_direction[k];
      proj.push_back(dot);
      score.push_back(mu);
    }
  }
  ASSERT_GT(proj.size(), 100u);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < proj.size(); ++i) mx += proj[i], my += score[i];
  mx /= static_cast<double>(proj.size());
  my /= static_cast<double>(proj.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    sxy += (proj[i] - mx) * (score[i] - my);
    sxx += (proj[i] - mx) * (proj[i] - mx);
    syy += (score[i] - my) * (score[i] - my);
  }
  EXPECT_LT(sxy / std::sqrt(sxx * syy), -0.2);
}
