#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "nextvit/error.hpp"
#include "nextvit/rng.hpp"

namespace nextvit {

enum class Precision { Single, Double };

template <typename T>
inline constexpr bool is_scalar_v = std::is_same_v<T, float> || std::is_same_v<T, double>;

/// Activation shape in (batch, channel, height, width) order.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  constexpr std::int64_t numel() const noexcept { return n * c * h * w; }
  constexpr std::int64_t spatial() const noexcept { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

std::ostream& operator<<(std::ostream& os, const Shape& s);

/// Dense rank-4 array, row-major over (n, c, h, w).
template <typename T>
class BasicTensor {
  static_assert(is_scalar_v<T>, "BasicTensor supports float and double only");

 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  static constexpr Precision precision() noexcept {
    return std::is_same_v<T, float> ? Precision::Single : Precision::Double;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) noexcept {
    return data_[static_cast<std::size_t>(index(n, c, h, w))];
  }
  const T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const noexcept {
    return data_[static_cast<std::size_t>(index(n, c, h, w))];
  }
  T& operator[](std::int64_t i) noexcept { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const noexcept { return data_[static_cast<std::size_t>(i)]; }

  /// Plane of one (n, c) pair: h*w contiguous values.
  std::span<const T> plane(std::int64_t n, std::int64_t c) const noexcept {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(index(n, c, 0, 0)),
                                             static_cast<std::size_t>(shape_.spatial()));
  }
  std::span<T> plane(std::int64_t n, std::int64_t c) noexcept {
    return std::span<T>(data_).subspan(static_cast<std::size_t>(index(n, c, 0, 0)),
                                       static_cast<std::size_t>(shape_.spatial()));
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  /// Same data, new shape of equal element count.
  BasicTensor reshaped(Shape shape) const;

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Row-major 2-D matrix used for token/feature views and logits.
template <typename T>
class BasicMatrix {
  static_assert(is_scalar_v<T>, "BasicMatrix supports float and double only");

 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::int64_t rows, std::int64_t cols, T fill = T{0});
  BasicMatrix(std::int64_t rows, std::int64_t cols, std::vector<T> data);

  std::int64_t rows() const noexcept { return rows_; }
  std::int64_t cols() const noexcept { return cols_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  T& operator()(std::int64_t r, std::int64_t c) noexcept {
    return data_[static_cast<std::size_t>(r * cols_ + c)];
  }
  const T& operator()(std::int64_t r, std::int64_t c) const noexcept {
    return data_[static_cast<std::size_t>(r * cols_ + c)];
  }
  std::span<const T> row(std::int64_t r) const noexcept {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(r * cols_),
                                             static_cast<std::size_t>(cols_));
  }
  std::span<T> row(std::int64_t r) noexcept {
    return std::span<T>(data_).subspan(static_cast<std::size_t>(r * cols_),
                                       static_cast<std::size_t>(cols_));
  }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

// Elementwise and shape primitives.

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Channels of `a` followed by channels of `b`.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Channels [begin, end) of `x`.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::int64_t begin, std::int64_t end);

/// Concatenate along the batch axis.
template <typename T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts);

template <typename T>
BasicTensor<T> slice_batch(const BasicTensor<T>& x, std::int64_t begin, std::int64_t end);

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// Row-wise softmax, stabilised by subtracting each row's maximum.
/// Throws NonFinite when the input contains NaN or Inf.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m);

template <typename T>
bool all_finite(std::span<const T> values) noexcept;

template <typename T>
T max_abs_diff(std::span<const T> a, std::span<const T> b);

template <typename T>
BasicTensor<T> random_normal(Shape shape, SplitMix64& rng, double stddev = 1.0);

template <typename T>
BasicTensor<T> random_uniform(Shape shape, SplitMix64& rng, double lo, double hi);

}  // namespace nextvit
