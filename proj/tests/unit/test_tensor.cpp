#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "nextvit/error.hpp"
#include "nextvit/param_set.hpp"
#include "nextvit/tensor.hpp"

using namespace nextvit;

namespace {

template <typename F>
void expect_kind(ErrorKind kind, F&& f) {
  try {
    f();
    FAIL() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor t(Shape{2, 3, 4, 5}, 1.5f);
  EXPECT_EQ(t.size(), 120);
  EXPECT_EQ(t.index(1, 2, 3, 4), 119);
  t(1, 0, 2, 1) = 7.0f;
  EXPECT_EQ(t[t.index(1, 0, 2, 1)], 7.0f);
  EXPECT_EQ(t.plane(1, 0).size(), 20u);
}

TEST(Tensor, DataSizeMustMatchShape) {
  expect_kind(ErrorKind::ShapeMismatch, [] { Tensor(Shape{1, 2, 2, 2}, std::vector<float>(7)); });
  expect_kind(ErrorKind::ShapeMismatch, [] { Tensor(Shape{1, 2, 2, 2}).reshaped(Shape{1, 1, 1, 9}); });
}

TEST(Tensor, AddRejectsDifferentShapes) {
  expect_kind(ErrorKind::ShapeMismatch, [] { add(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 2, 3})); });
}

TEST(TensorProperty, ConcatThenSliceRestoresParts) {
  for (int i = 0; i < 50; ++i) {
    gen::Gen g(100 + i);
    const Shape a = g.shape();
    const Shape b{a.n, g.range(1, 6), a.h, a.w};
    const TensorD x = g.tensor<double>(a);
    const TensorD y = g.tensor<double>(b);
    const TensorD cat = concat_channels(x, y);
    ASSERT_EQ(cat.shape().c, a.c + b.c) << "case " << i;
    EXPECT_EQ(slice_channels(cat, 0, a.c), x) << "case " << i;
    EXPECT_EQ(slice_channels(cat, a.c, a.c + b.c), y) << "case " << i;
  }
}

TEST(TensorProperty, BatchSplitAndJoinRoundTrip) {
  for (int i = 0; i < 30; ++i) {
    gen::Gen g(200 + i);
    Shape s = g.shape();
    s.n = g.range(2, 4);
    const Tensor x = g.tensor<float>(s);
    std::vector<Tensor> parts;
    for (std::int64_t k = 0; k < s.n; ++k) parts.push_back(slice_batch(x, k, k + 1));
    EXPECT_EQ(concat_batch<float>(parts), x) << "case " << i;
  }
}

TEST(TensorProperty, SoftmaxRowsArePositiveAndSumToOne) {
  for (int i = 0; i < 40; ++i) {
    gen::Gen g(300 + i);
    const auto rows = g.range(1, 5);
    const auto cols = g.range(1, 12);
    MatrixD m(rows, cols);
    for (auto& v : m.data()) v = 30.0 * g.rng.normal();
    const MatrixD p = softmax_rows(m);
    for (std::int64_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (double v : p.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12) << "case " << i;
    }
  }
}

TEST(TensorProperty, SoftmaxIsShiftInvariant) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(400 + i);
    MatrixD m(2, 6);
    for (auto& v : m.data()) v = g.rng.normal();
    MatrixD shifted = m;
    const double c = 100.0 * g.rng.normal();
    for (auto& v : shifted.data()) v += c;
    const MatrixD a = softmax_rows(m);
    const MatrixD b = softmax_rows(shifted);
    EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-12);
  }
}

TEST(Tensor, SoftmaxRejectsNonFinite) {
  MatrixD m(1, 3, {1.0, NAN, 2.0});
  expect_kind(ErrorKind::NonFinite, [&] { softmax_rows(m); });
}

TEST(Tensor, MatmulKnownValues) {
  const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
  const Matrix c = matmul(a, b);
  EXPECT_EQ(c, Matrix(2, 2, {58, 64, 139, 154}));
  expect_kind(ErrorKind::ShapeMismatch, [&] { matmul(a, a); });
}

TEST(TensorProperty, MatmulIsAssociative) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(500 + i);
    const auto m = g.range(1, 5), k = g.range(1, 5), l = g.range(1, 5), n = g.range(1, 5);
    auto mat = [&](std::int64_t r, std::int64_t c) {
      MatrixD x(r, c);
      for (auto& v : x.data()) v = g.rng.normal();
      return x;
    };
    const MatrixD a = mat(m, k), b = mat(k, l), c = mat(l, n);
    const MatrixD left = matmul(matmul(a, b), c);
    const MatrixD right = matmul(a, matmul(b, c));
    EXPECT_LT(max_abs_diff(left.data(), right.data()), 1e-12);
  }
}

TEST(Rng, SeededStreamsRepeat) {
  SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
  SplitMix64 r(1);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) mean += r.normal();
  EXPECT_NEAR(mean / 20000.0, 0.0, 0.03);
}

TEST(ParamSet, InsertLookupAndErrors) {
  ParamSet p;
  p.insert("a.weight", ParamArray({2, 3}, 1.0f));
  EXPECT_TRUE(p.contains("a.weight"));
  EXPECT_EQ(p.at("a.weight").numel(), 6);
  EXPECT_EQ(p.scalar_count(), 6);
  expect_kind(ErrorKind::DuplicateName, [&] { p.insert("a.weight", ParamArray({1})); });
  expect_kind(ErrorKind::MissingParam, [&] { (void)p.at("b"); });
  expect_kind(ErrorKind::ShapeMismatch, [] { ParamArray({2, 2}, std::vector<float>(3)); });
}

TEST(ParamSetProperty, ChecksumTracksContent) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(600 + i);
    ParamSet p = g.param_set();
    ParamSet q = p;
    EXPECT_EQ(p.checksum(), q.checksum());
    q.insert_or_assign("extra", ParamArray({1}, 0.5f));
    EXPECT_NE(p.checksum(), q.checksum());
  }
}
