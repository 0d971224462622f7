#include "nextvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace nextvit {

std::string Shape::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << '(' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ')';
}

namespace {

void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    fail(ErrorKind::ShapeMismatch, "negative extent in shape " + s.str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
  check_shape(shape);
  data_.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data_.size()) != shape.numel()) {
    fail(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape.str());
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    fail(ErrorKind::ShapeMismatch, "cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return BasicTensor<T>(shape, data_);
}

template <typename T>
BasicMatrix<T>::BasicMatrix(std::int64_t rows, std::int64_t cols, T fill) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) fail(ErrorKind::ShapeMismatch, "negative matrix extent");
  data_.assign(static_cast<std::size_t>(rows * cols), fill);
}

template <typename T>
BasicMatrix<T>::BasicMatrix(std::int64_t rows, std::int64_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0 || static_cast<std::int64_t>(data_.size()) != rows * cols) {
    fail(ErrorKind::ShapeMismatch, "matrix data length does not match " + std::to_string(rows) +
                                       "x" + std::to_string(cols));
  }
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch, "add: " + a.shape().str() + " vs " + b.shape().str());
  }
  BasicTensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    fail(ErrorKind::ShapeMismatch, "concat_channels: " + sa.str() + " vs " + sb.str());
  }
  BasicTensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::int64_t plane_a = sa.c * sa.spatial();
  const std::int64_t plane_b = sb.c * sb.spatial();
  auto dst = out.data().begin();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    dst = std::copy_n(a.data().begin() + n * plane_a, plane_a, dst);
    dst = std::copy_n(b.data().begin() + n * plane_b, plane_b, dst);
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::int64_t begin, std::int64_t end) {
  const Shape& s = x.shape();
  if (begin < 0 || end < begin || end > s.c) {
    fail(ErrorKind::ShapeMismatch, "slice_channels: [" + std::to_string(begin) + ", " +
                                       std::to_string(end) + ") out of range for " + s.str());
  }
  BasicTensor<T> out(Shape{s.n, end - begin, s.h, s.w});
  const std::int64_t len = (end - begin) * s.spatial();
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(x.data().begin() + x.index(n, begin, 0, 0), len, out.data().begin() + n * len);
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) return BasicTensor<T>();
  Shape s = parts.front().shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      fail(ErrorKind::ShapeMismatch, "concat_batch: " + ps.str() + " vs " + s.str());
    }
    total += ps.n;
  }
  s.n = total;
  BasicTensor<T> out(s);
  auto dst = out.data().begin();
  for (const auto& p : parts) dst = std::copy(p.data().begin(), p.data().end(), dst);
  return out;
}

template <typename T>
BasicTensor<T> slice_batch(const BasicTensor<T>& x, std::int64_t begin, std::int64_t end) {
  Shape s = x.shape();
  if (begin < 0 || end < begin || end > s.n) {
    fail(ErrorKind::ShapeMismatch, "slice_batch out of range for " + s.str());
  }
  const std::int64_t per = s.c * s.spatial();
  s.n = end - begin;
  BasicTensor<T> out(s);
  std::copy_n(x.data().begin() + begin * per, s.numel(), out.data().begin());
  return out;
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::ShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.rows()));
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::int64_t k = 0; k < a.cols(); ++k) {
      const T av = a(i, k);
      auto src = b.row(k);
      for (std::int64_t j = 0; j < b.cols(); ++j) dst[j] += av * src[j];
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
  if (m.cols() < 1) fail(ErrorKind::ShapeMismatch, "softmax_rows requires at least one column");
  if (!all_finite<T>(m.data())) fail(ErrorKind::NonFinite, "softmax_rows input contains NaN/Inf");
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    auto dst = out.row(r);
    const T mx = *std::max_element(src.begin(), src.end());
    T total = 0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    const T inv = T{1} / total;
    for (auto& v : dst) v *= inv;
  }
  return out;
}

template <typename T>
bool all_finite(std::span<const T> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
T max_abs_diff(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) fail(ErrorKind::ShapeMismatch, "max_abs_diff: length mismatch");
  T worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

template <typename T>
BasicTensor<T> random_normal(Shape shape, SplitMix64& rng, double stddev) {
  BasicTensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.normal() * stddev);
  return out;
}

template <typename T>
BasicTensor<T> random_uniform(Shape shape, SplitMix64& rng, double lo, double hi) {
  BasicTensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

#define NEXTVIT_INSTANTIATE(T)                                                                 \
  template class BasicTensor<T>;                                                               \
  template class BasicMatrix<T>;                                                               \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::int64_t, std::int64_t);   \
  template BasicTensor<T> concat_batch(std::span<const BasicTensor<T>>);                       \
  template BasicTensor<T> slice_batch(const BasicTensor<T>&, std::int64_t, std::int64_t);      \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);                \
  template BasicMatrix<T> softmax_rows(const BasicMatrix<T>&);                                 \
  template bool all_finite(std::span<const T>) noexcept;                                       \
  template T max_abs_diff(std::span<const T>, std::span<const T>);                             \
  template BasicTensor<T> random_normal(Shape, SplitMix64&, double);                           \
  template BasicTensor<T> random_uniform(Shape, SplitMix64&, double, double);

NEXTVIT_INSTANTIATE(float)
NEXTVIT_INSTANTIATE(double)

#undef NEXTVIT_INSTANTIATE

}  // namespace nextvit
