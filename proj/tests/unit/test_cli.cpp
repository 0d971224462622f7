#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "nextvit/cli.hpp"
#include "nextvit/io.hpp"
#include "nextvit/verify.hpp"

using namespace nextvit;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string dir() {
  const auto d = std::filesystem::temp_directory_path() / "nextvit_cli";
  std::filesystem::create_directories(d);
  return d.string();
}

std::string tiny_config() {
  const std::string path = dir() + "/tiny.json";
  write_file(path, render_config(verify::tiny_model_spec()));
  return path;
}

std::string argmax_lines(const std::string& s) {
  std::istringstream in(s);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("sample", 0) == 0) out += line + "\n";
  }
  return out;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"describe"}).code, 2);
  EXPECT_EQ(cli({"bench", "S", "--iters", "many"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, InputErrorsExitTwo) {
  const CliRun r = cli({"describe", dir() + "/does_not_exist.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("IoError"), std::string::npos);
  write_file(dir() + "/bad.json", "{\"variant\": \"S\", \"extra\": 1}");
  EXPECT_EQ(cli({"describe", dir() + "/bad.json"}).code, 2);
  EXPECT_EQ(cli({"describe", "S", "--size", "22a"}).code, 2);
}

TEST(Cli, DescribeReportsVariantS) {
  const CliRun r = cli({"describe", "S"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("31784744"), std::string::npos);
  EXPECT_NE(r.out.find("params 31.78M, FLOPs 5.79G"), std::string::npos);
  EXPECT_NE(r.out.find("stages.2.blocks.9"), std::string::npos);
}

TEST(Cli, BenchOneIterationOneRowPerTarget) {
  const std::string cfg = tiny_config();
  const std::string csv = dir() + "/bench.csv";
  const CliRun r = cli({"bench", cfg, "--iters", "1", "--warmup", "0", "--size", "32x32", "--per-block", "--csv", csv});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = read_file(csv);
  const auto lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(lines, 2 + 1 + 1 + verify::tiny_model_spec().block_count() + 1);
}

TEST(Cli, FoldThenInferKeepsArgmax) {
  const std::string cfg = tiny_config();
  const std::string w = dir() + "/tiny.nvtw";
  const std::string x = dir() + "/x.nvtw";
  const std::string f = dir() + "/tiny_folded.nvtw";
  ASSERT_EQ(cli({"init", cfg, "--out", w, "--seed", "3", "--calibrate"}).code, 0);
  ASSERT_EQ(cli({"make-input", "--out", x, "--batch", "3", "--size", "64", "--seed", "8"}).code, 0);
  const CliRun folded = cli({"fold", cfg, w, "--out", f, "--samples", "4", "--size", "64x64", "--tol", "1e-3"});
  ASSERT_EQ(folded.code, 0) << folded.out << folded.err;
  EXPECT_NE(folded.out.find("norm nodes after fold: 0"), std::string::npos);
  const CliRun a = cli({"infer", cfg, w, x, "--trace"});
  const CliRun b = cli({"infer", f + ".json", f, x});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(argmax_lines(a.out), argmax_lines(b.out));
  EXPECT_NE(a.out.find("stage 4 (3,256,2,2)"), std::string::npos) << a.out;
  EXPECT_EQ(cli({"fold", cfg, w, "--out", f, "--samples", "1", "--size", "32", "--tol", "0"}).code, 1);
}

TEST(Cli, InferRejectsWeightsOfAnotherModel) {
  const std::string cfg = tiny_config();
  const std::string w = dir() + "/other.nvtw";
  const std::string x = dir() + "/x1.nvtw";
  ASSERT_EQ(cli({"init", "S", "--out", w}).code, 0);
  ASSERT_EQ(cli({"make-input", "--out", x, "--size", "32"}).code, 0);
  EXPECT_EQ(cli({"infer", cfg, w, x}).code, 2);
}

TEST(Cli, FoldOfLayerNormModelExitsTwo) {
  ModelSpec s = verify::tiny_model_spec();
  s.norm = NormKind::LayerNorm;
  const std::string cfg = dir() + "/ln.json";
  write_file(cfg, render_config(s));
  const std::string w = dir() + "/ln.nvtw";
  ASSERT_EQ(cli({"init", cfg, "--out", w}).code, 0);
  const CliRun r = cli({"fold", cfg, w, "--out", dir() + "/ln_folded.nvtw"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NotFoldable"), std::string::npos);
}

TEST(Cli, SelftestPasses) {
  const CliRun r = cli({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, GradcheckRejectsTinySize) { EXPECT_EQ(cli({"gradcheck", "--max-size", "1"}).code, 2); }
