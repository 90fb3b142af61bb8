#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using ovc::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ovc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return ovc::data::detail::read_file(p); }

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = call({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
  EXPECT_EQ(call({"train", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({"synth", "--seed", "1"}).code, 2);  // missing --n and --out
  EXPECT_EQ(call({"eval", "--data", "/nonexistent/dir", "--ckpt", "/nonexistent.ckpt"}).code, 2);
  const auto dir = scratch("usage");
  EXPECT_EQ(call({"synth", "--seed", "1", "--n", "5", "--out", dir.string(), "--plant-label", "blurry"}).code, 2);
  EXPECT_EQ(call({"synth", "--seed", "1", "--n", "5", "--out", dir.string(), "--profile", "huge"}).code, 2);
}

TEST(Cli, RuntimeFailureExitsOne) {
  const auto dir = scratch("runtime");
  fs::create_directories(dir / "data");
  ovc::data::detail::write_file(dir / "bad.ckpt", "not a checkpoint");
  ASSERT_EQ(call({"synth", "--seed", "2", "--n", "10", "--out", (dir / "data").string()}).code, 0);
  const auto r = call({"eval", "--data", (dir / "data").string(), "--ckpt", (dir / "bad.ckpt").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ovc: error:"), std::string::npos) << r.err;
}

TEST(Cli, EndToEndWorkflow) {
  const auto dir = scratch("flow");
  const std::string data = (dir / "data").string(), ckpt = (dir / "best.ckpt").string();
  ASSERT_EQ(call({"synth", "--seed", "3", "--n", "40", "--out", data}).code, 0);
  ASSERT_TRUE(fs::exists(dir / "data" / "manifest.jsonl"));

  auto r = call({"train", "--data", data, "--steps", "20", "--lr", "1e-3", "--out", ckpt, "--history",
                 (dir / "history.jsonl").string(), "--final-out", (dir / "final.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(ckpt + ".log")), 20u);
  const auto first = nlohmann::json::parse(slurp(ckpt + ".log").substr(0, slurp(ckpt + ".log").find('\n')));
  EXPECT_EQ(first["step"], 1);
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  EXPECT_GE(lines(slurp(dir / "history.jsonl")), 1u);

  r = call({"eval", "--data", data, "--ckpt", ckpt});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["count"], 8);
  EXPECT_TRUE(report.contains("mean_emd"));

  r = call({"infer", "--data", data, "--ckpt", ckpt, "--threads", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out), 41u);
  EXPECT_EQ(r.out.rfind("id\tmean\tstd\tp1", 0), 0u);
  EXPECT_EQ(call({"infer", "--data", data, "--ckpt", ckpt, "--threads", "1"}).out, r.out);

  const std::string log = (dir / "attn.jsonl").string();
  r = call({"export-attn", "--data", data, "--ckpt", ckpt, "--out", log});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ovc::interpret::load_log(log).images.size(), 40u);

  const std::string rep = (dir / "report").string();
  r = call({"interpret", "--log", log, "--out", rep, "--top-k", "10", "--plots"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"subjects.tsv", "category_correlation.tsv", "attribute_correlation.tsv",
                        "category_pair_correlation.tsv", "summary.json"})
    EXPECT_TRUE(fs::exists(fs::path(rep) / f)) << f;
  EXPECT_EQ(slurp(fs::path(rep) / "category_correlation.tsv").rfind("label\ttrain_r\ttest_r", 0), 0u);
  EXPECT_TRUE(nlohmann::json::parse(slurp(fs::path(rep) / "summary.json")).contains("cross_split"));
}

TEST(Cli, BaselineHasNoAttentionToExport) {
  const auto dir = scratch("baseline");
  const std::string data = (dir / "data").string(), ckpt = (dir / "b.ckpt").string();
  ASSERT_EQ(call({"synth", "--seed", "4", "--n", "12", "--out", data}).code, 0);
  ASSERT_EQ(call({"train", "--data", data, "--arm", "baseline", "--steps", "2", "--out", ckpt}).code, 0);
  EXPECT_EQ(call({"export-attn", "--data", data, "--ckpt", ckpt, "--out", (dir / "a.jsonl").string()}).code, 1);
}

TEST(Cli, TrainingIsReproducible) {
  const auto dir = scratch("repro");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(call({"synth", "--seed", "5", "--n", "24", "--out", data}).code, 0);
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(call({"train", "--data", data, "--arm", "oar", "--global", "wide", "--steps", "6", "--seed", "9", "--out",
                    (dir / (std::string(name) + ".ckpt")).string()})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  EXPECT_EQ(slurp(dir / "a.ckpt.log"), slurp(dir / "b.ckpt.log"));
}

#ifdef OVC_CLI_PATH
TEST(CliBinary, ExitCodes) {
  const auto dir = scratch("binary");
  const std::string exe = OVC_CLI_PATH;
  auto sh = [&](const std::string& args) {
    const int status = std::system((exe + " " + args + " >" + (dir / "out.txt").string() + " 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(sh("--help"), 0);
  EXPECT_EQ(sh("--bogus"), 2);
  EXPECT_EQ(sh("synth --seed 1 --n 6 --out " + (dir / "d").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "d" / "features.bin"));
  EXPECT_EQ(sh("interpret --log " + (dir / "d" / "manifest.jsonl").string()), 1);
}
#endif
