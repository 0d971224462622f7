#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "nextvit/tensor.hpp"

namespace nextvit {

inline constexpr double kNormEps = 1e-5;

enum class ConvAlgo { Direct, Im2col };

/// Process-wide defaults. Both paths produce the same values up to float
/// reassociation; benchmarks select between them.
ConvAlgo default_conv_algo() noexcept;
void set_default_conv_algo(ConvAlgo algo) noexcept;

/// Worker count for the GEMM row partition. Results are bit-identical for
/// every count because each output element keeps its accumulation order.
int num_threads() noexcept;
void set_num_threads(int threads);

struct ConvGeometry {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;

  std::int64_t in_per_group() const noexcept { return in_channels / groups; }
  std::int64_t out_per_group() const noexcept { return out_channels / groups; }
  std::int64_t weight_numel() const noexcept { return out_channels * in_per_group() * kernel * kernel; }
  /// Throws GroupMismatch when channels are not divisible by groups.
  void validate() const;
};

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, int stride, int padding) noexcept;
Shape conv_output_shape(const Shape& x, const ConvGeometry& g);

/// Owning convolution parameters: weight is (out, in/groups, k, k).
template <typename T>
struct ConvParams {
  BasicTensor<T> weight;
  std::vector<T> bias;  // empty or out_channels long
  int stride = 1;
  int padding = 0;
  int groups = 1;

  ConvGeometry geometry() const;
};

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = static_cast<T>(kNormEps);
};

template <typename T>
struct LayerNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  T eps = static_cast<T>(kNormEps);
};

template <typename T>
struct LinearParams {
  BasicMatrix<T> weight;  // (out_features, in_features)
  std::vector<T> bias;    // empty or out_features long
};

/// Grouped 2-D cross-correlation with zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                      const ConvGeometry& g, ConvAlgo algo = default_conv_algo());

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p, ConvAlgo algo = default_conv_algo());

/// Window means. With ceil_mode the trailing partial windows are kept and
/// averaged over their valid elements only.
template <typename T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, std::int64_t kernel, std::int64_t stride,
                          bool ceil_mode = false);

std::int64_t pool_out_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, bool ceil_mode) noexcept;

template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                std::span<const T> mean, std::span<const T> var, T eps = static_cast<T>(kNormEps));

template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, const BatchNormParams<T>& p);

/// Normalises over the channel axis independently at every (n, h, w).
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                          T eps = static_cast<T>(kNormEps));

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const LayerNormParams<T>& p);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

template <typename T>
inline T gelu_scalar(T x) noexcept {
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  return T{0.5} * x * (T{1} + std::tanh(k * (x + T{0.044715} * x * x * x)));
}

template <typename T>
BasicMatrix<T> linear(const BasicMatrix<T>& x, const LinearParams<T>& p);

/// Channel-mixing linear map applied at every spatial position; weight is
/// (out, in) row-major. Equivalent to a bias-carrying 1x1 convolution.
template <typename T>
BasicTensor<T> pointwise_linear(const BasicTensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                                std::int64_t out_features);

template <typename T>
BasicMatrix<T> global_avg_pool(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

// Attention layout helpers. A head view has shape (n, heads, tokens, head_dim)
// where tokens enumerate spatial positions row-major.

template <typename T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::int64_t head_dim);

template <typename T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::int64_t height, std::int64_t width);

/// For every (n, c) slice: a[.., T, K] x b[.., K, S] (or b[.., S, K]^T when transpose_b).
template <typename T>
BasicTensor<T> batched_matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b);

/// Softmax over the last axis.
template <typename T>
BasicTensor<T> softmax_last(const BasicTensor<T>& x);

namespace detail {

/// C[M x N] = A[M x K] * B[K x N], all row-major with the given leading dims.
/// Each C element accumulates over k in increasing order.
template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, std::int64_t lda, const T* b,
          std::int64_t ldb, T* c, std::int64_t ldc);

}  // namespace detail

}  // namespace nextvit
