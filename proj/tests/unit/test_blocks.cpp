#include <gtest/gtest.h>

#include "generators.hpp"
#include "nextvit/error.hpp"
#include "nextvit/exec.hpp"
#include "nextvit/graph.hpp"
#include "nextvit/verify.hpp"

using namespace nextvit;

namespace {

std::int64_t count_in(const Graph& g, const std::string& needle) {
  std::int64_t n = 0;
  for (const auto& node : g.nodes) n += node.path.find(needle) != std::string::npos ? 1 : 0;
  return n;
}

Graph trace_ntb(const NTBSpec& s, std::int64_t hw = 8) {
  GraphExec ex;
  auto x = ex.input(Shape{1, s.in_channels, hw, hw});
  (void)ntb(ex, x, s);
  return std::move(ex).graph();
}

}  // namespace

TEST(BranchSplitProperty, WidthsAddUpAndRespectHeads) {
  for (int i = 0; i < 200; ++i) {
    gen::Gen g(3000 + i);
    const std::int64_t d = g.pick<std::int64_t>({8, 16, 32});
    const std::int64_t out = d * g.range(1, 40);
    const double r = static_cast<double>(g.range(0, 100)) / 100.0;
    const BranchSplit s = split_branches(out, r, d);
    EXPECT_EQ(s.high + s.low, out);
    EXPECT_EQ(s.high % d, 0);
    EXPECT_EQ(s.low % d, 0);
    // Half-up rounding followed by snapping can drift by at most half a head plus half a channel.
    EXPECT_LE(std::abs(static_cast<double>(s.high) - r * static_cast<double>(out)), d / 2.0 + 0.5 + 1e-9);
  }
}

TEST(BranchSplit, KnownWidthsAndErrors) {
  EXPECT_EQ(split_branches(256, 0.75, 32).high, 192);
  EXPECT_EQ(split_branches(1024, 0.75, 32).low, 256);
  EXPECT_EQ(split_branches(256, 0.0, 32).high, 0);
  EXPECT_EQ(split_branches(256, 1.0, 32).low, 0);
  try {
    split_branches(256, 1.5, 32);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidRatio);
  }
}

TEST(MHCA, HeadMismatchIsRejected) {
  const MHCASpec s{48, 32, NormKind::BatchNorm, ActKind::ReLU};
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HeadMismatch);
  }
}

TEST(MHCA, SingleHeadEqualsDenseConv) {
  const verify::CheckResult r = verify::check_mhca_dense(11);
  EXPECT_TRUE(r.passed) << verify::format(r);
}

TEST(MHCAProperty, MatchesNaiveOracleForAnyHeadCount) {
  for (int i = 0; i < 8; ++i) {
    gen::Gen g(3100 + i);
    const std::int64_t d = g.pick<std::int64_t>({4, 8});
    const MHCASpec s{d * g.range(1, 4), d, g.coin() ? NormKind::BatchNorm : NormKind::LayerNorm,
                     g.coin() ? ActKind::ReLU : ActKind::GELU};
    const ParamSet p = verify::random_params(block_params(s), 50 + i);
    const TensorD x = g.tensor<double>(Shape{1, s.channels, g.range(1, 7), g.range(1, 7)});
    const TensorD a = mhca_forward(x, s, p);
    const TensorD b = verify::naive_mhca(x, s, p);
    EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-12) << "case " << i;
  }
}

TEST(EMHSA, MatchesBruteForceOnSmallGrids) {
  for (auto [h, w] : {std::pair{1, 1}, std::pair{2, 3}, std::pair{5, 5}, std::pair{8, 8}}) {
    const auto r = verify::check_emhsa_bruteforce(h, w, 1, 21);
    EXPECT_TRUE(r.passed) << verify::format(r);
  }
  EXPECT_TRUE(verify::check_emhsa_bruteforce(8, 8, 2, 22).passed);
  EXPECT_TRUE(verify::check_emhsa_bruteforce(6, 7, 4, 23).passed);
}

TEST(EMHSA, LinearScaleModeUsesOneOverD) {
  EMHSASpec s{64, 16, 1, NormKind::BatchNorm, AttnScaleMode::Linear};
  EXPECT_DOUBLE_EQ(s.scale(), 1.0 / 16.0);
  s.scale_mode = AttnScaleMode::Sqrt;
  EXPECT_DOUBLE_EQ(s.scale(), 0.25);
}

TEST(EMHSA, KeyExtentShrinksBySrRatio) {
  const EMHSASpec s{64, 32, 2, NormKind::BatchNorm, AttnScaleMode::Sqrt};
  GraphExec ex;
  (void)emhsa(ex, ex.input(Shape{1, 64, 14, 14}), s);
  const Graph g = std::move(ex).graph();
  bool found = false;
  for (const auto& n : g.nodes) {
    if (n.kind == OpKind::MatMulNT) {
      EXPECT_EQ(n.shape, (Shape{1, 2, 196, 49}));
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(NCB, AdapterOnlyWhenChannelsChange) {
  EXPECT_EQ(count_in([] {
              GraphExec ex;
              (void)ncb(ex, ex.input(Shape{1, 64, 8, 8}), NCBSpec{64, 64, 32});
              return std::move(ex).graph();
            }(),
                     "adapter"),
            0);
  GraphExec ex;
  const auto y = ncb(ex, ex.input(Shape{1, 32, 8, 8}), NCBSpec{32, 64, 32});
  EXPECT_EQ(y.shape, (Shape{1, 64, 8, 8}));
  EXPECT_GT(count_in(std::move(ex).graph(), "adapter"), 0);
}

TEST(NTB, RatioExtremesDropABranch) {
  const NTBSpec base{256, 256, 32, 2, 0.75, 2.0};
  NTBSpec r0 = base;
  r0.shrink_ratio = 0.0;
  NTBSpec r1 = base;
  r1.shrink_ratio = 1.0;
  EXPECT_EQ(count_in(trace_ntb(r0), "emhsa"), 0);
  EXPECT_GT(count_in(trace_ntb(r0), "mhca"), 0);
  EXPECT_EQ(count_in(trace_ntb(r1), "mhca"), 0);
  EXPECT_GT(count_in(trace_ntb(r1), "emhsa"), 0);
  EXPECT_GT(count_in(trace_ntb(base), "emhsa"), 0);
  EXPECT_GT(count_in(trace_ntb(base), "mhca"), 0);
}

TEST(NTBProperty, OutputWidthIsAlwaysOutChannels) {
  for (int i = 0; i < 30; ++i) {
    gen::Gen g(3200 + i);
    const std::int64_t d = 8;
    NTBSpec s{d * g.range(1, 6), d * g.range(1, 8), d, g.range(1, 3), static_cast<double>(g.range(0, 4)) / 4.0, 2.0};
    const Graph gr = trace_ntb(s, g.range(1, 9));
    EXPECT_EQ(gr.nodes.back().shape.c, s.out_channels) << "case " << i;
  }
}

TEST(Blocks, EagerFloatAndDoubleAgree) {
  const NTBSpec s{32, 64, 16, 2, 0.75, 2.0, NormKind::BatchNorm, ActKind::GELU};
  const ParamSet p = verify::random_params(block_params(s), 4);
  gen::Gen g(4);
  const TensorD x = g.tensor<double>(Shape{2, 32, 6, 6});
  const TensorD a = ntb_forward(x, s, p);
  const Tensor b = ntb_forward(x.cast<float>(), s, p);
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - double(b[i])));
  EXPECT_LT(m, 1e-4);
}

TEST(Blocks, MissingParameterIsReported) {
  const NCBSpec s{32, 32, 16};
  ParamSet p = verify::random_params(block_params(s), 4);
  p.erase("mlp.fc2.weight");
  try {
    (void)ncb_forward(Tensor(Shape{1, 32, 4, 4}), s, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingParam);
  }
}
