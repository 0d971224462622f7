#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "nextvit/error.hpp"
#include "nextvit/nn_ops.hpp"
#include "nextvit/verify.hpp"

using namespace nextvit;

namespace {

template <typename A, typename B>
double diff(const A& a, const B& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace

TEST(ConvProperty, BothAlgorithmsMatchNaiveLoops) {
  for (int i = 0; i < 60; ++i) {
    gen::Gen g(1000 + i);
    const auto [shape, geo] = g.conv();
    const TensorD x = g.tensor<double>(shape);
    const TensorD w = g.tensor<double>(Shape{1, 1, 1, geo.weight_numel()});
    const std::vector<double> b = g.coin() ? std::vector<double>(geo.out_channels, 0.25) : std::vector<double>{};
    const TensorD ref = verify::naive_conv2d(x, w.data(), b, geo);
    for (ConvAlgo algo : {ConvAlgo::Direct, ConvAlgo::Im2col}) {
      const TensorD y = conv2d<double>(x, w.data(), b, geo, algo);
      ASSERT_EQ(y.shape(), ref.shape()) << "case " << i;
      EXPECT_LT(diff(y.data(), ref.data()), 1e-12) << "case " << i;
    }
  }
}

TEST(Conv, StemFirstLayerShape) {
  const ConvGeometry g{3, 64, 3, 2, 1, 1};
  EXPECT_EQ(conv_output_shape(Shape{1, 3, 224, 224}, g), (Shape{1, 64, 112, 112}));
}

TEST(Conv, GroupMismatchIsRejected) {
  const ConvGeometry g{6, 8, 3, 1, 1, 4};
  EXPECT_THROW(g.validate(), Error);
  try {
    g.validate();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GroupMismatch);
  }
}

TEST(ConvProperty, ThreadCountDoesNotChangeBits) {
  gen::Gen g(77);
  const Tensor x = g.tensor<float>(Shape{2, 16, 20, 20});
  const Tensor w = g.tensor<float>(Shape{1, 1, 1, 32 * 16 * 9}, 0.1);
  const ConvGeometry geo{16, 32, 3, 1, 1, 1};
  const int saved = num_threads();
  set_num_threads(1);
  const Tensor a = conv2d<float>(x, w.data(), {}, geo, ConvAlgo::Im2col);
  set_num_threads(3);
  const Tensor b = conv2d<float>(x, w.data(), {}, geo, ConvAlgo::Im2col);
  set_num_threads(saved);
  EXPECT_EQ(a, b);
}

TEST(Pool, CeilModeKeepsPartialWindows) {
  EXPECT_EQ(pool_out_extent(7, 2, 2, false), 3);
  EXPECT_EQ(pool_out_extent(7, 2, 2, true), 4);
  TensorD x(Shape{1, 1, 1, 3}, std::vector<double>{1, 2, 6});
  const TensorD y = avg_pool2d<double>(x, 2, 2, true);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(PoolProperty, MatchesNaiveWindows) {
  for (int i = 0; i < 40; ++i) {
    gen::Gen g(1100 + i);
    const Shape s = g.shape(4, 11);
    const std::int64_t k = g.range(1, 4);
    const bool ceil = g.coin();
    if (!ceil && (s.h < k || s.w < k)) continue;
    const TensorD x = g.tensor<double>(s);
    const TensorD a = avg_pool2d<double>(x, k, k, ceil);
    const TensorD b = verify::naive_avg_pool(x, k, ceil);
    ASSERT_EQ(a.shape(), b.shape()) << "case " << i;
    EXPECT_LT(diff(a.data(), b.data()), 1e-12) << "case " << i;
  }
}

TEST(NormProperty, BatchAndLayerNormMatchFormulas) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(1200 + i);
    const Shape s = g.shape();
    const TensorD x = g.tensor<double>(s, 3.0);
    std::vector<double> gamma(s.c), beta(s.c), mean(s.c), var(s.c);
    for (std::int64_t c = 0; c < s.c; ++c) {
      gamma[c] = g.rng.uniform(0.5, 1.5);
      beta[c] = g.rng.normal();
      mean[c] = g.rng.normal();
      var[c] = g.rng.uniform(0.1, 3.0);
    }
    EXPECT_LT(diff(batch_norm_infer<double>(x, gamma, beta, mean, var).data(),
                   verify::naive_batch_norm(x, gamma, beta, mean, var).data()),
              1e-12);
    EXPECT_LT(diff(layer_norm<double>(x, gamma, beta).data(), verify::naive_layer_norm(x, gamma, beta).data()), 1e-12);
  }
}

TEST(LayerNorm, NormalisesEachPositionOverChannels) {
  gen::Gen g(5);
  const TensorD x = g.tensor<double>(Shape{1, 16, 3, 3}, 5.0);
  const std::vector<double> ones(16, 1.0), zeros(16, 0.0);
  const TensorD y = layer_norm<double>(x, ones, zeros);
  for (std::int64_t h = 0; h < 3; ++h) {
    double mean = 0.0, sq = 0.0;
    for (std::int64_t c = 0; c < 16; ++c) mean += y(0, c, h, 0);
    mean /= 16.0;
    for (std::int64_t c = 0; c < 16; ++c) sq += (y(0, c, h, 0) - mean) * (y(0, c, h, 0) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 16.0, 1.0, 1e-5);
  }
}

TEST(Activations, KnownValues) {
  TensorD x(Shape{1, 1, 1, 4}, std::vector<double>{-2.0, -0.0, 0.5, 3.0});
  const TensorD r = relu(x);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[2], 0.5);
  EXPECT_NEAR(gelu_scalar(1.0), 0.8411919906082768, 1e-12);
  EXPECT_NEAR(gelu_scalar(-1.0), -0.15880800939172324, 1e-12);
  EXPECT_EQ(gelu_scalar(0.0), 0.0);
}

TEST(LinearProperty, PointwiseLinearEqualsBiasedOneByOneConv) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(1300 + i);
    const Shape s = g.shape();
    const std::int64_t out = g.range(1, 7);
    const TensorD x = g.tensor<double>(s);
    const TensorD w = g.tensor<double>(Shape{1, 1, 1, out * s.c});
    const TensorD b = g.tensor<double>(Shape{1, 1, 1, out});
    const TensorD a = pointwise_linear<double>(x, w.data(), b.data(), out);
    const TensorD c = conv2d<double>(x, w.data(), b.data(), ConvGeometry{s.c, out, 1, 1, 0, 1});
    EXPECT_LT(diff(a.data(), c.data()), 1e-12) << "case " << i;
  }
}

TEST(HeadsProperty, SplitThenMergeIsIdentity) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(1400 + i);
    const std::int64_t d = g.range(1, 4);
    const Shape s{g.range(1, 2), d * g.range(1, 4), g.range(1, 5), g.range(1, 5)};
    const TensorD x = g.tensor<double>(s);
    const TensorD h = split_heads(x, d);
    EXPECT_EQ(h.shape(), (Shape{s.n, s.c / d, s.h * s.w, d}));
    EXPECT_EQ(merge_heads(h, s.h, s.w), x);
  }
}

TEST(Heads, SplitRejectsIndivisibleChannels) {
  EXPECT_THROW(split_heads(TensorD(Shape{1, 6, 2, 2}), 4), Error);
}

TEST(BatchedMatmulProperty, TransposeFlagMatchesExplicitTranspose) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(1500 + i);
    const auto t = g.range(1, 6), s = g.range(1, 6), k = g.range(1, 6);
    const TensorD a = g.tensor<double>(Shape{1, 2, t, k});
    const TensorD b = g.tensor<double>(Shape{1, 2, s, k});
    TensorD bt(Shape{1, 2, k, s});
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t r = 0; r < s; ++r)
        for (std::int64_t q = 0; q < k; ++q) bt(0, c, q, r) = b(0, c, r, q);
    EXPECT_LT(diff(batched_matmul(a, b, true).data(), batched_matmul(a, bt, false).data()), 1e-12);
  }
}

TEST(SoftmaxLast, RowsMatchNaive) {
  gen::Gen g(9);
  const TensorD x = g.tensor<double>(Shape{2, 3, 4, 5}, 5.0);
  const TensorD y = softmax_last(x);
  for (std::int64_t r = 0; r < 24; ++r) {
    const auto row = verify::naive_softmax(x.data().subspan(r * 5, 5));
    EXPECT_LT(diff(y.data().subspan(r * 5, 5), row), 1e-14);
  }
}

TEST(GlobalPool, AveragesEachPlane) {
  TensorD x(Shape{1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, -1, -1, -1, 5});
  const MatrixD m = global_avg_pool(x);
  EXPECT_DOUBLE_EQ(m(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(m(0, 1), 0.5);
}
