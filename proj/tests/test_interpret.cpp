#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ovc/interpret.hpp"
#include "ovc/synthetic.hpp"

using namespace ovc;
using namespace ovc::interpret;

namespace {

RegionAttention region(std::string category, double a, std::string attribute = "plain") {
  return RegionAttention{std::move(category), {std::move(attribute)}, a, false};
}

ImageAttention image(std::string id, Split split, double mu, std::vector<RegionAttention> regions) {
  ImageAttention im;
  im.id = std::move(id);
  im.split = split;
  im.semantic_category = "portrait";
  im.predicted_mean = mu;
  im.truth_mean = mu;
  im.regions = std::move(regions);
  return im;
}

}  // namespace

TEST(Subjects, HandExample) {
  AttentionLog log;
  log.images.push_back(image("a", Split::train, 6.0, {region("eye", 0.8), region("tree", 0.3), region("sky", 0.3)}));
  log.images.push_back(image("b", Split::train, 7.0, {region("eye", 0.8), region("grass", 0.3)}));
  const auto r = discover_subjects(log, "portrait");
  ASSERT_EQ(r.subjects.size(), 1u);
  EXPECT_EQ(r.subjects[0].label, "eye");
  EXPECT_NEAR(r.subjects[0].delta, 0.5, 1e-12);
  EXPECT_NEAR(r.subjects[0].mean_other, 0.3, 1e-12);
  EXPECT_EQ(r.subjects[0].occurrences, 2u);
  EXPECT_EQ(r.images, 2u);
}

TEST(Subjects, EqualMeansGiveNoSubjects) {
  AttentionLog log;
  log.images.push_back(image("a", Split::train, 6.0, {region("eye", 0.4), region("tree", 0.4), region("sky", 0.4)}));
  EXPECT_TRUE(discover_subjects(log, "").subjects.empty());
}

TEST(Subjects, LowScoresTestSplitAndPaddingAreIgnored) {
  AttentionLog log;
  log.images.push_back(image("low", Split::train, 5.0, {region("eye", 0.9), region("tree", 0.1)}));
  log.images.push_back(image("test", Split::test, 8.0, {region("eye", 0.9), region("tree", 0.1)}));
  auto r = discover_subjects(log, "");
  EXPECT_TRUE(r.subjects.empty());
  EXPECT_EQ(r.images, 0u);
  EXPECT_FALSE(r.diagnostic.empty());

  RegionAttention pad = region("eye", 0.99);
  pad.padded = true;
  log.images.push_back(image("ok", Split::train, 6.0, {region("eye", 0.3), region("tree", 0.3), pad}));
  r = discover_subjects(log, "");
  EXPECT_TRUE(r.subjects.empty());
  EXPECT_TRUE(discover_subjects(log, "landscape").subjects.empty());
}

TEST(Subjects, RaisingMarginNeverAddsSubjects) {
  SyntheticLogOptions o;
  o.images = 400;
  o.subject = std::make_pair(std::string("eye"), 0.3);
  const AttentionLog log = synthetic_attention_log(1, o);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double margin : {0.0, 0.02, 0.04, 0.1, 0.2, 0.29, 0.35}) {
    const auto n = discover_subjects(log, "", margin).subjects.size();
    EXPECT_LE(n, prev) << margin;
    prev = n;
  }
  const auto found = discover_subjects(log, "", 0.04);
  ASSERT_FALSE(found.subjects.empty());
  EXPECT_EQ(found.subjects.front().label, "eye");
  EXPECT_NEAR(found.subjects.front().delta, 0.3, 0.03);
  EXPECT_EQ(found.subjects.size(), 1u);
  EXPECT_TRUE(discover_subjects(log, "", 0.35).subjects.empty());
}

TEST(Correlation, ConstantAttentionIsUndefined) {
  AttentionLog log;
  for (int i = 0; i < 6; ++i) {
    const Split s = i % 2 ? Split::test : Split::train;
    log.images.push_back(image("i" + std::to_string(i), s, 3.0 + i, {region("eye", 0.5, "flat"), region("sky", 0.1 * i, "vary")}));
  }
  const auto t = attention_score_correlation(log, LabelKind::attribute);
  ASSERT_NE(t.find("flat"), nullptr);
  EXPECT_FALSE(t.find("flat")->train.has_value());
  ASSERT_TRUE(t.find("vary")->train.has_value());
  EXPECT_NEAR(*t.find("vary")->train, 1.0, 1e-12);
  EXPECT_EQ(t.find("vary")->train_n, 3u);
}

TEST(Correlation, TooFewOccurrencesIsUndefined) {
  AttentionLog log;
  log.images.push_back(image("a", Split::train, 4, {region("eye", 0.1)}));
  log.images.push_back(image("b", Split::train, 6, {region("eye", 0.9)}));
  log.images.push_back(image("c", Split::test, 5, {region("eye", 0.5)}));
  const auto t = attention_score_correlation(log, LabelKind::category);
  EXPECT_FALSE(t.find("eye")->train.has_value());
  EXPECT_EQ(t.find("eye")->train_n, 2u);
}

TEST(Correlation, MissingSplitIsAnError) {
  AttentionLog log;
  log.images.push_back(image("a", Split::train, 4, {region("eye", 0.1)}));
  EXPECT_THROW(attention_score_correlation(log, LabelKind::category), std::invalid_argument);
}

TEST(Correlation, TopKByTrainFrequency) {
  SyntheticLogOptions o;
  o.images = 200;
  const auto t = attention_score_correlation(synthetic_attention_log(2, o), LabelKind::category, {.top_k = 4});
  EXPECT_EQ(t.rows.size(), 4u);
}

TEST(Correlation, PlantedLabelIsRecovered) {
  SyntheticLogOptions o;
  o.images = 3200;
  o.plants = {{"blurry", LabelKind::attribute, -0.8}};
  const AttentionLog log = synthetic_attention_log(3, o);
  const auto t = attention_score_correlation(log, LabelKind::attribute);
  const auto* row = t.find("blurry");
  ASSERT_NE(row, nullptr);
  EXPECT_GT(row->test_n, 1500u);
  EXPECT_NEAR(*row->test, -0.8, 0.05);
  EXPECT_NEAR(*row->train, -0.8, 0.05);
  for (const auto& r : t.rows) {
    if (r.label == "blurry") continue;
    EXPECT_LT(std::abs(*r.test), 0.1) << r.label;
  }
}

TEST(Correlation, SpearmanAgreesInSign) {
  SyntheticLogOptions o;
  o.images = 1000;
  o.plants = {{"green", LabelKind::attribute, 0.7}};
  const auto t = attention_score_correlation(synthetic_attention_log(4, o), LabelKind::attribute,
                                             {.method = CorrelationMethod::spearman});
  EXPECT_GT(*t.find("green")->test, 0.5);
}

TEST(Correlation, ConsistentPlantsGiveHighCrossSplitAgreement) {
  SyntheticLogOptions o;
  o.images = 4000;
  o.plants = {{"blurry", LabelKind::attribute, -0.8}, {"green", LabelKind::attribute, 0.6},
              {"bright", LabelKind::attribute, 0.3}, {"dark", LabelKind::attribute, -0.4}};
  const auto t = attention_score_correlation(synthetic_attention_log(5, o), LabelKind::attribute);
  EXPECT_GE(cross_split_correlation(t), 0.8);
}

TEST(Correlation, CrossSplitOfIdenticalColumnsIsOne) {
  CorrelationTable t;
  for (double v : {-0.5, 0.1, 0.3, 0.7}) t.rows.push_back({"l" + std::to_string(v), v, v, 10, 10});
  t.rows.push_back({"undefined", std::nullopt, 0.2, 1, 10});
  EXPECT_NEAR(cross_split_correlation(t), 1.0, 1e-12);
  t.rows.resize(2);
  EXPECT_THROW(cross_split_correlation(t), std::invalid_argument);
}

TEST(PairCorrelation, PlantedPairIsNegative) {
  SyntheticLogOptions o;
  o.images = 3000;
  o.pair_plant = std::make_pair(std::make_pair(std::string("eye"), std::string("ear")), -1.0);
  const auto t = pair_attention_correlation(synthetic_attention_log(6, o), LabelKind::category);
  const auto* row = t.find(pair_key("eye", "ear"));
  ASSERT_NE(row, nullptr);
  EXPECT_LT(*row->test, -0.3);
  EXPECT_LT(std::abs(*t.find(pair_key("sky", "tree"))->test), 0.1);
}

TEST(PairCorrelation, SelfPairsAreExcludedAndRowsBounded) {
  AttentionLog log;
  for (int i = 0; i < 8; ++i) {
    ImageAttention im = image("i" + std::to_string(i), i % 2 ? Split::test : Split::train, 3.0 + i,
                              {region("eye", 0.5), region("eye", 0.5), region("sky", 0.5)});
    // diagonal follows the score, off-diagonal entries are fixed
    const double d = 0.1 + 0.05 * i, off = (1.0 - d) / 2;
    im.alpha = {d, off, off, off, d, off, off, off, d};
    log.images.push_back(im);
  }
  const auto t = pair_attention_correlation(log, LabelKind::category);
  EXPECT_LE(t.rows.size(), 3u);  // eye|eye, eye|sky, sky|sky at most
  EXPECT_EQ(t.find(pair_key("sky", "sky")), nullptr);
  const auto* ee = t.find(pair_key("eye", "eye"));
  ASSERT_NE(ee, nullptr);
  EXPECT_EQ(ee->train_n, 4u * 2);  // (0,1) and (1,0) per image
  EXPECT_EQ(pair_key("b", "a"), "a|b");
}

TEST(PairCorrelation, NoAlphaIsAnError) {
  SyntheticLogOptions o;
  o.images = 20;
  o.with_alpha = false;
  EXPECT_THROW(pair_attention_correlation(synthetic_attention_log(7, o), LabelKind::category), std::invalid_argument);
}

TEST(Correlation, NullModelStaysSmall) {
  SyntheticLogOptions o;
  o.images = 2000;
  const auto t = attention_score_correlation(synthetic_attention_log(8, o), LabelKind::attribute);
  for (const auto& r : t.rows) EXPECT_LT(std::abs(*r.test), 0.1) << r.label;
}

TEST(AttentionLog, RoundTripAndValidation) {
  SyntheticLogOptions o;
  o.images = 30;
  const AttentionLog log = synthetic_attention_log(9, o);
  std::stringstream s;
  write_log(log, s);
  EXPECT_EQ(read_log(s), log);

  AttentionLog bad = log;
  bad.images[0].regions[0].attention = 1.5;
  std::stringstream b;
  EXPECT_THROW(write_log(bad, b), std::exception);
  bad = log;
  bad.images[0].alpha[0] += 0.1;
  std::stringstream c;
  EXPECT_THROW(write_log(bad, c), std::exception);

  std::stringstream truncated(s.str().substr(0, s.str().size() / 2));
  EXPECT_THROW(read_log(truncated), std::exception);
}

TEST(Reports, TsvAndPlots) {
  CorrelationTable t;
  t.rows.push_back({"blurry", -0.8, std::nullopt, 100, 2});
  std::ostringstream out;
  write_tsv(t, out);
  EXPECT_EQ(out.str(), "label\ttrain_r\ttest_r\ttrain_n\ttest_n\nblurry\t-0.800000\tNA\t100\t2\n");
  const std::string svg = scatter_svg({0.1, 0.2, 0.3}, {4, 5, 6}, "blurry");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(scatter_svg({}, {}, "empty").find("</svg>"), std::string::npos);
}

TEST(Export, ModelLogIsValid) {
  const auto ds = data::generate_synthetic(10, 12, Profile::desk);
  const model::Model m = model::init_model(model::make_config(Profile::desk), 10);
  const AttentionLog log = export_attention(m, ds);
  ASSERT_EQ(log.images.size(), 12u);
  for (const auto& im : log.images) {
    EXPECT_NO_THROW(validate(im));
    EXPECT_EQ(im.regions.size(), 10u);
    EXPECT_EQ(im.alpha.size(), 100u);
  }
  const model::Model base = model::init_model(model::make_config(Profile::desk, model::ModelArm::baseline), 10);
  EXPECT_THROW(export_attention(base, ds), std::invalid_argument);
}
