#include <gtest/gtest.h>

#include "generators.hpp"
#include "nextvit/analysis.hpp"
#include "nextvit/error.hpp"
#include "nextvit/model.hpp"
#include "nextvit/verify.hpp"

using namespace nextvit;

namespace {

std::vector<std::int64_t> depths(const ModelSpec& s) {
  std::vector<std::int64_t> d;
  for (const auto& st : s.stages) d.push_back(static_cast<std::int64_t>(st.blocks.size()));
  return d;
}

std::vector<std::int64_t> ntbs(const ModelSpec& s) {
  std::vector<std::int64_t> d;
  for (const auto& st : s.stages) d.push_back(st.count(BlockType::NTB));
  return d;
}

}  // namespace

TEST(Variants, DepthLaw) {
  using V = std::vector<std::int64_t>;
  EXPECT_EQ(depths(build_variant(Variant::S)), (V{3, 4, 10, 3}));
  EXPECT_EQ(depths(build_variant(Variant::B)), (V{3, 4, 20, 3}));
  EXPECT_EQ(depths(build_variant(Variant::L)), (V{3, 4, 30, 3}));
  EXPECT_EQ(ntbs(build_variant(Variant::S)), (V{0, 1, 2, 1}));
  EXPECT_EQ(ntbs(build_variant(Variant::B)), (V{0, 1, 4, 1}));
  EXPECT_EQ(ntbs(build_variant(Variant::L)), (V{0, 1, 6, 1}));
}

TEST(Variants, NtbEndsEveryHybridGroup) {
  const ModelSpec s = build_variant(Variant::B);
  const auto& st = s.stages[2];
  for (std::size_t b = 0; b < st.blocks.size(); ++b) {
    EXPECT_EQ(st.blocks[b].type == BlockType::NTB, b % 5 == 4) << b;
  }
}

TEST(Variants, StageWidths) {
  const ModelSpec s = build_variant(Variant::S);
  std::vector<std::int64_t> widths;
  for (const auto& st : s.stages) widths.push_back(st.out_channels());
  EXPECT_EQ(widths, (std::vector<std::int64_t>{96, 256, 512, 1024}));
  EXPECT_FALSE(s.stages[0].embed.downsample);
  EXPECT_EQ(s.reduction(), 32);
}

TEST(Variants, ParseNames) {
  EXPECT_EQ(parse_variant("s"), Variant::S);
  EXPECT_EQ(parse_variant("L"), Variant::L);
  EXPECT_THROW(parse_variant("XL"), Error);
}

TEST(Pattern, LetterStrategies) {
  const ModelSpec cccc = build_hybrid(HybridPattern::parse("C C C C"));
  EXPECT_EQ(ntbs(cccc), (std::vector<std::int64_t>{0, 0, 0, 0}));
  const ModelSpec hhhh = build_hybrid(HybridPattern::parse("HHHH"));
  EXPECT_EQ(ntbs(hhhh)[0], 1);
  const ModelSpec ccct = build_hybrid(HybridPattern::parse("CCCT"));
  EXPECT_EQ(ntbs(ccct), (std::vector<std::int64_t>{0, 0, 0, 3}));
  EXPECT_EQ(HybridPattern::parse("c h h h").str(), "C H H H");
}

TEST(Pattern, InvalidInputs) {
  for (const char* bad : {"CXHH", "CCC", "CCCCC", ""}) {
    try {
      (void)HybridPattern::parse(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidPattern) << bad;
    }
  }
  HybridPattern p;
  p.n[1] = 0;
  EXPECT_THROW(build_hybrid(p), Error);
}

TEST(Model, StageTraceForS) {
  GraphExec ex;
  const ModelSpec s = build_variant(Variant::S);
  std::vector<Shape> trace;
  const auto y = model_forward(ex, s, ex.input(Shape{1, 3, 224, 224}), &trace);
  ASSERT_EQ(trace.size(), 5u);
  EXPECT_EQ(trace[0], (Shape{1, 64, 56, 56}));
  EXPECT_EQ(trace[1], (Shape{1, 96, 56, 56}));
  EXPECT_EQ(trace[2], (Shape{1, 256, 28, 28}));
  EXPECT_EQ(trace[3], (Shape{1, 512, 14, 14}));
  EXPECT_EQ(trace[4], (Shape{1, 1024, 7, 7}));
  EXPECT_EQ(y.shape, (Shape{1, 1000, 1, 1}));
}

TEST(Model, ParameterDeclarations) {
  const auto decls = model_params(build_variant(Variant::S));
  std::map<std::string, std::vector<std::int64_t>> dims;
  for (const auto& d : decls) dims[d.name] = d.dims;
  EXPECT_EQ(dims.at("stem.0.conv.weight"), (std::vector<std::int64_t>{64, 3, 3, 3}));
  EXPECT_EQ(dims.at("head.weight"), (std::vector<std::int64_t>{1000, 1024}));
  EXPECT_EQ(dims.at("stages.1.blocks.3.emhsa.q.weight"), (std::vector<std::int64_t>{192, 192}));
  EXPECT_TRUE(dims.contains("stages.2.blocks.4.mhca.group_conv.weight"));
  EXPECT_FALSE(dims.contains("stem.0.conv.bias"));
}

TEST(Model, InputMustMatchReduction) {
  const ModelSpec s = build_variant(Variant::S);
  EXPECT_NO_THROW(check_input(s, Shape{2, 3, 64, 96}));
  for (Shape bad : {Shape{1, 3, 225, 224}, Shape{1, 1, 224, 224}}) {
    try {
      check_input(s, bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
  }
}

TEST(Init, DeterministicAndUnitNorms) {
  const ModelSpec s = verify::tiny_model_spec();
  const ParamSet a = init_params(s, 9);
  EXPECT_EQ(a, init_params(s, 9));
  EXPECT_NE(a.checksum(), init_params(s, 10).checksum());
  for (const auto& [name, arr] : a) {
    const bool gamma = name.find("norm") != std::string::npos && name.ends_with(".weight");
    if (gamma || name.ends_with("running_var")) {
      for (float v : arr.data) EXPECT_EQ(v, 1.0f) << name;
    }
    if (name.ends_with(".bias") || name.ends_with("running_mean")) {
      for (float v : arr.data) EXPECT_EQ(v, 0.0f) << name;
    }
  }
}

TEST(Init, WeightVarianceFollowsFanIn) {
  const ParamSet p = init_params(build_variant(Variant::S), 1);
  const auto& w = p.at("stages.2.blocks.0.mlp.fc1.weight");
  double sq = 0.0;
  for (float v : w.data) sq += double(v) * v;
  const double var = sq / static_cast<double>(w.numel());
  EXPECT_NEAR(var * static_cast<double>(w.dims[1]), 1.0, 0.05);
}

TEST(Forward, DeterministicAcrossRuns) {
  const ModelSpec s = verify::tiny_model_spec();
  SplitMix64 rng(3);
  const Tensor x = random_normal<float>(Shape{2, 3, 64, 64}, rng);
  const Matrix a = forward(s, init_params(s, 5), x);
  const Matrix b = forward(s, init_params(s, 5), x);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rows(), 2);
  EXPECT_EQ(a.cols(), 10);
}

TEST(Forward, ConvAlgorithmsAgree) {
  const ModelSpec s = verify::tiny_model_spec();
  const ParamSet p = init_params(s, 5);
  SplitMix64 rng(3);
  const Tensor x = random_normal<float>(Shape{1, 3, 32, 32}, rng);
  ForwardOptions direct;
  direct.algo = ConvAlgo::Direct;
  ForwardOptions im2col;
  im2col.algo = ConvAlgo::Im2col;
  const Matrix a = forward(s, p, x, direct);
  const Matrix b = forward(s, p, x, im2col);
  EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-3f);
}

TEST(Forward, SingleAndDoublePrecisionAgree) {
  const ModelSpec s = verify::tiny_model_spec();
  const ParamSet p = init_params(s, 5);
  SplitMix64 rng(4);
  const TensorD x = random_normal<double>(Shape{1, 3, 32, 32}, rng);
  const MatrixD a = forward(s, p, x);
  const Matrix b = forward(s, p, x.cast<float>());
  double m = 0.0, scale = 0.0;
  for (std::int64_t i = 0; i < a.cols(); ++i) {
    m = std::max(m, std::abs(a(0, i) - double(b(0, i))));
    scale = std::max(scale, std::abs(a(0, i)));
  }
  EXPECT_LT(m, 1e-4 * std::max(1.0, scale));
}

TEST(ModelProperty, RandomPatternsBuildAndTrace) {
  for (int i = 0; i < 25; ++i) {
    gen::Gen g(4000 + i);
    HybridPattern p;
    for (auto& c : p.letters) c = g.pick<char>({'C', 'T', 'H'});
    for (auto& n : p.n) n = g.range(1, 3);
    for (auto& l : p.l) l = g.range(1, 2);
    const ModelSpec s = build_hybrid(p, default_widths(), 10);
    EXPECT_NO_THROW(s.validate());
    const Graph gr = trace_graph(s, 64, 64);
    EXPECT_EQ(gr.nodes[static_cast<std::size_t>(gr.output)].shape, (Shape{1, 10, 1, 1})) << p.str();
    for (std::size_t st = 0; st < 4; ++st) {
      const std::int64_t expect = p.letters[st] == 'C' ? p.n[st] * p.l[st]
                                  : p.letters[st] == 'T' ? (p.n[st] + 1) * p.l[st]
                                                         : (p.n[st] + 1) * p.l[st];
      EXPECT_EQ(static_cast<std::int64_t>(s.stages[st].blocks.size()), expect) << p.str();
    }
  }
}
