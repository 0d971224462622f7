#include "nextvit/nn_ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace nextvit {

namespace {

std::atomic<ConvAlgo> g_conv_algo{ConvAlgo::Im2col};

template <typename T>
void check_channel_vector(std::span<const T> v, std::int64_t channels, const char* what) {
  if (static_cast<std::int64_t>(v.size()) != channels) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + " has " + std::to_string(v.size()) +
                                       " entries, expected " + std::to_string(channels));
  }
}

template <typename T>
void check_conv_inputs(const Shape& s, std::span<const T> weight, std::span<const T> bias, const ConvGeometry& g) {
  g.validate();
  if (s.c != g.in_channels) {
    fail(ErrorKind::ShapeMismatch, "conv2d expects " + std::to_string(g.in_channels) + " input channels, got " +
                                       s.str());
  }
  if (static_cast<std::int64_t>(weight.size()) != g.weight_numel()) {
    fail(ErrorKind::ShapeMismatch, "conv2d weight has " + std::to_string(weight.size()) + " values, expected " +
                                       std::to_string(g.weight_numel()));
  }
  if (!bias.empty()) check_channel_vector(bias, g.out_channels, "conv2d bias");
  if (s.h + 2 * g.padding < g.kernel || s.w + 2 * g.padding < g.kernel) {
    fail(ErrorKind::ShapeMismatch, "conv2d kernel exceeds padded input " + s.str());
  }
}

template <typename T>
void conv2d_direct(const BasicTensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                   const ConvGeometry& g, BasicTensor<T>& out) {
  const Shape& s = x.shape();
  const Shape& os = out.shape();
  const std::int64_t k = g.kernel;
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t cout_g = g.out_per_group();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const std::int64_t grp = oc / cout_g;
      auto dst = out.plane(n, oc);
      std::fill(dst.begin(), dst.end(), bias.empty() ? T{0} : bias[static_cast<std::size_t>(oc)]);
      for (std::int64_t icg = 0; icg < cin_g; ++icg) {
        const std::int64_t ic = grp * cin_g + icg;
        auto src = x.plane(n, ic);
        const T* wk = weight.data() + ((oc * cin_g + icg) * k) * k;
        for (std::int64_t kh = 0; kh < k; ++kh) {
          for (std::int64_t kw = 0; kw < k; ++kw) {
            const T wv = wk[kh * k + kw];
            for (std::int64_t oh = 0; oh < os.h; ++oh) {
              const std::int64_t ih = oh * g.stride - g.padding + kh;
              if (ih < 0 || ih >= s.h) continue;
              T* drow = dst.data() + oh * os.w;
              const T* srow = src.data() + ih * s.w;
              for (std::int64_t ow = 0; ow < os.w; ++ow) {
                const std::int64_t iw = ow * g.stride - g.padding + kw;
                if (iw < 0 || iw >= s.w) continue;
                drow[ow] += wv * srow[iw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_im2col(const BasicTensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                   const ConvGeometry& g, BasicTensor<T>& out) {
  const Shape& s = x.shape();
  const Shape& os = out.shape();
  const std::int64_t k = g.kernel;
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t cout_g = g.out_per_group();
  const std::int64_t cols = os.h * os.w;
  const std::int64_t depth = cin_g * k * k;
  const bool pointwise = k == 1 && g.stride == 1 && g.padding == 0;
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(depth * cols));
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      const T* bmat = nullptr;
      if (pointwise) {
        bmat = x.data().data() + x.index(n, grp * cin_g, 0, 0);
      } else {
        for (std::int64_t icg = 0; icg < cin_g; ++icg) {
          auto src = x.plane(n, grp * cin_g + icg);
          for (std::int64_t kh = 0; kh < k; ++kh) {
            for (std::int64_t kw = 0; kw < k; ++kw) {
              T* crow = col.data() + ((icg * k + kh) * k + kw) * cols;
              for (std::int64_t oh = 0; oh < os.h; ++oh) {
                const std::int64_t ih = oh * g.stride - g.padding + kh;
                T* cdst = crow + oh * os.w;
                if (ih < 0 || ih >= s.h) {
                  std::fill_n(cdst, os.w, T{0});
                  continue;
                }
                const T* srow = src.data() + ih * s.w;
                for (std::int64_t ow = 0; ow < os.w; ++ow) {
                  const std::int64_t iw = ow * g.stride - g.padding + kw;
                  cdst[ow] = (iw < 0 || iw >= s.w) ? T{0} : srow[iw];
                }
              }
            }
          }
        }
        bmat = col.data();
      }
      T* cmat = out.data().data() + out.index(n, grp * cout_g, 0, 0);
      const T* amat = weight.data() + grp * cout_g * depth;
      detail::gemm(cout_g, cols, depth, amat, depth, bmat, cols, cmat, cols);
      if (!bias.empty()) {
        for (std::int64_t oc = 0; oc < cout_g; ++oc) {
          const T bv = bias[static_cast<std::size_t>(grp * cout_g + oc)];
          T* row = cmat + oc * cols;
          for (std::int64_t j = 0; j < cols; ++j) row[j] += bv;
        }
      }
    }
  }
}

}  // namespace

ConvAlgo default_conv_algo() noexcept { return g_conv_algo.load(std::memory_order_relaxed); }
void set_default_conv_algo(ConvAlgo algo) noexcept { g_conv_algo.store(algo, std::memory_order_relaxed); }

void ConvGeometry::validate() const {
  if (groups < 1 || in_channels < 0 || out_channels < 0 || kernel < 1 || stride < 1 || padding < 0) {
    fail(ErrorKind::InvalidArgument, "invalid convolution geometry");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    fail(ErrorKind::GroupMismatch, "channels " + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
                                       " not divisible by groups=" + std::to_string(groups));
  }
}

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, int stride, int padding) noexcept {
  return (in + 2 * padding - kernel) / stride + 1;
}

Shape conv_output_shape(const Shape& x, const ConvGeometry& g) {
  return Shape{x.n, g.out_channels, conv_out_extent(x.h, g.kernel, g.stride, g.padding),
               conv_out_extent(x.w, g.kernel, g.stride, g.padding)};
}

template <typename T>
ConvGeometry ConvParams<T>::geometry() const {
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) fail(ErrorKind::ShapeMismatch, "conv kernel must be square");
  return ConvGeometry{ws.c * groups, ws.n, ws.h, stride, padding, groups};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                      const ConvGeometry& g, ConvAlgo algo) {
  check_conv_inputs(x.shape(), weight, bias, g);
  BasicTensor<T> out(conv_output_shape(x.shape(), g));
  if (algo == ConvAlgo::Direct) {
    conv2d_direct(x, weight, bias, g, out);
  } else {
    conv2d_im2col(x, weight, bias, g, out);
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p, ConvAlgo algo) {
  return conv2d<T>(x, p.weight.data(), std::span<const T>(p.bias), p.geometry(), algo);
}

std::int64_t pool_out_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, bool ceil_mode) noexcept {
  if (ceil_mode) return (in - 1) / stride + 1;
  return (in - kernel) / stride + 1;
}

template <typename T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, std::int64_t kernel, std::int64_t stride, bool ceil_mode) {
  const Shape& s = x.shape();
  if (kernel < 1 || stride < 1) fail(ErrorKind::InvalidArgument, "pool kernel and stride must be >= 1");
  if (!ceil_mode && (s.h < kernel || s.w < kernel)) {
    fail(ErrorKind::ShapeMismatch, "pool window " + std::to_string(kernel) + " exceeds input " + s.str());
  }
  if (s.h < 1 || s.w < 1) fail(ErrorKind::ShapeMismatch, "pool on empty spatial extent " + s.str());
  const std::int64_t oh_n = pool_out_extent(s.h, kernel, stride, ceil_mode);
  const std::int64_t ow_n = pool_out_extent(s.w, kernel, stride, ceil_mode);
  BasicTensor<T> out(Shape{s.n, s.c, oh_n, ow_n});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::int64_t oh = 0; oh < oh_n; ++oh) {
        const std::int64_t h0 = oh * stride;
        const std::int64_t h1 = std::min(h0 + kernel, s.h);
        for (std::int64_t ow = 0; ow < ow_n; ++ow) {
          const std::int64_t w0 = ow * stride;
          const std::int64_t w1 = std::min(w0 + kernel, s.w);
          T acc = 0;
          for (std::int64_t ih = h0; ih < h1; ++ih) {
            for (std::int64_t iw = w0; iw < w1; ++iw) acc += src[static_cast<std::size_t>(ih * s.w + iw)];
          }
          dst[static_cast<std::size_t>(oh * ow_n + ow)] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                std::span<const T> mean, std::span<const T> var, T eps) {
  const Shape& s = x.shape();
  check_channel_vector(gamma, s.c, "batch_norm gamma");
  check_channel_vector(beta, s.c, "batch_norm beta");
  check_channel_vector(mean, s.c, "batch_norm running_mean");
  check_channel_vector(var, s.c, "batch_norm running_var");
  BasicTensor<T> out(s);
  for (std::int64_t c = 0; c < s.c; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const T inv = T{1} / std::sqrt(var[ci] + eps);
    const T mul = gamma[ci] * inv;
    const T m = mean[ci];
    const T b = beta[ci];
    for (std::int64_t n = 0; n < s.n; ++n) {
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - m) * mul + b;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, const BatchNormParams<T>& p) {
  return batch_norm_infer<T>(x, p.gamma, p.beta, p.running_mean, p.running_var, p.eps);
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps) {
  const Shape& s = x.shape();
  check_channel_vector(gamma, s.c, "layer_norm gamma");
  check_channel_vector(beta, s.c, "layer_norm beta");
  BasicTensor<T> out(s);
  const std::int64_t hw = s.spatial();
  std::vector<T> mean(static_cast<std::size_t>(hw));
  std::vector<T> var(static_cast<std::size_t>(hw));
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::fill(mean.begin(), mean.end(), T{0});
    std::fill(var.begin(), var.end(), T{0});
    for (std::int64_t c = 0; c < s.c; ++c) {
      auto src = x.plane(n, c);
      for (std::int64_t i = 0; i < hw; ++i) mean[i] += src[i];
    }
    for (auto& m : mean) m /= static_cast<T>(s.c);
    for (std::int64_t c = 0; c < s.c; ++c) {
      auto src = x.plane(n, c);
      for (std::int64_t i = 0; i < hw; ++i) {
        const T d = src[i] - mean[i];
        var[i] += d * d;
      }
    }
    for (auto& v : var) v = T{1} / std::sqrt(v / static_cast<T>(s.c) + eps);
    for (std::int64_t c = 0; c < s.c; ++c) {
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      const T g = gamma[static_cast<std::size_t>(c)];
      const T b = beta[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - mean[i]) * var[i] * g + b;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const LayerNormParams<T>& p) {
  return layer_norm<T>(x, p.gamma, p.beta, p.eps);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = gelu_scalar(src[i]);
  return out;
}

template <typename T>
BasicMatrix<T> linear(const BasicMatrix<T>& x, const LinearParams<T>& p) {
  const std::int64_t in = p.weight.cols();
  const std::int64_t out_f = p.weight.rows();
  if (x.cols() != in) {
    fail(ErrorKind::ShapeMismatch, "linear expects " + std::to_string(in) + " features, got " +
                                       std::to_string(x.cols()));
  }
  if (!p.bias.empty()) check_channel_vector(std::span<const T>(p.bias), out_f, "linear bias");
  BasicMatrix<T> out(x.rows(), out_f);
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    for (std::int64_t o = 0; o < out_f; ++o) {
      auto wr = p.weight.row(o);
      T acc = p.bias.empty() ? T{0} : p.bias[static_cast<std::size_t>(o)];
      for (std::int64_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      out(r, o) = acc;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> pointwise_linear(const BasicTensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                                std::int64_t out_features) {
  ConvGeometry g{x.shape().c, out_features, 1, 1, 0, 1};
  return conv2d<T>(x, weight, bias, g, ConvAlgo::Im2col);
}

template <typename T>
BasicMatrix<T> global_avg_pool(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h < 1 || s.w < 1) fail(ErrorKind::ShapeMismatch, "global_avg_pool on empty spatial extent");
  BasicMatrix<T> out(s.n, s.c);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      T acc = 0;
      for (T v : x.plane(n, c)) acc += v;
      out(n, c) = acc / static_cast<T>(s.spatial());
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  BasicTensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * factor;
  return out;
}

template <typename T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::int64_t head_dim) {
  const Shape& s = x.shape();
  if (head_dim < 1 || s.c % head_dim != 0) {
    fail(ErrorKind::HeadMismatch, std::to_string(s.c) + " channels not divisible by head_dim " +
                                      std::to_string(head_dim));
  }
  const std::int64_t heads = s.c / head_dim;
  const std::int64_t tokens = s.spatial();
  BasicTensor<T> out(Shape{s.n, heads, tokens, head_dim});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t d = 0; d < head_dim; ++d) {
        auto src = x.plane(n, h * head_dim + d);
        for (std::int64_t t = 0; t < tokens; ++t) out(n, h, t, d) = src[static_cast<std::size_t>(t)];
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::int64_t height, std::int64_t width) {
  const Shape& s = x.shape();
  if (s.h != height * width) {
    fail(ErrorKind::ShapeMismatch, "merge_heads: " + std::to_string(s.h) + " tokens cannot form " +
                                       std::to_string(height) + "x" + std::to_string(width));
  }
  BasicTensor<T> out(Shape{s.n, s.c * s.w, height, width});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t h = 0; h < s.c; ++h) {
      for (std::int64_t d = 0; d < s.w; ++d) {
        auto dst = out.plane(n, h * s.w + d);
        for (std::int64_t t = 0; t < s.h; ++t) dst[static_cast<std::size_t>(t)] = x(n, h, t, d);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> batched_matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::int64_t inner_b = transpose_b ? sb.w : sb.h;
  const std::int64_t cols = transpose_b ? sb.h : sb.w;
  if (sa.n != sb.n || sa.c != sb.c || sa.w != inner_b) {
    fail(ErrorKind::ShapeMismatch, "batched_matmul: " + sa.str() + " x " + sb.str() +
                                       (transpose_b ? "^T" : ""));
  }
  BasicTensor<T> out(Shape{sa.n, sa.c, sa.h, cols});
  std::vector<T> bt;
  for (std::int64_t n = 0; n < sa.n; ++n) {
    for (std::int64_t c = 0; c < sa.c; ++c) {
      const T* am = a.data().data() + a.index(n, c, 0, 0);
      const T* bm = b.data().data() + b.index(n, c, 0, 0);
      T* cm = out.data().data() + out.index(n, c, 0, 0);
      if (transpose_b) {
        bt.resize(static_cast<std::size_t>(sb.h * sb.w));
        for (std::int64_t i = 0; i < sb.h; ++i) {
          for (std::int64_t j = 0; j < sb.w; ++j) bt[static_cast<std::size_t>(j * sb.h + i)] = bm[i * sb.w + j];
        }
        bm = bt.data();
      }
      detail::gemm(sa.h, cols, sa.w, am, sa.w, bm, cols, cm, cols);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_last(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  BasicMatrix<T> view(s.n * s.c * s.h, s.w, x.storage());
  auto y = softmax_rows(view);
  return BasicTensor<T>(s, std::vector<T>(y.data().begin(), y.data().end()));
}

#define NEXTVIT_INSTANTIATE(T)                                                                              \
  template struct ConvParams<T>;                                                                            \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, std::span<const T>, std::span<const T>,            \
                                 const ConvGeometry&, ConvAlgo);                                            \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const ConvParams<T>&, ConvAlgo);                   \
  template BasicTensor<T> avg_pool2d(const BasicTensor<T>&, std::int64_t, std::int64_t, bool);             \
  template BasicTensor<T> batch_norm_infer(const BasicTensor<T>&, std::span<const T>, std::span<const T>,  \
                                           std::span<const T>, std::span<const T>, T);                      \
  template BasicTensor<T> batch_norm_infer(const BasicTensor<T>&, const BatchNormParams<T>&);              \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, std::span<const T>, std::span<const T>, T);    \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const LayerNormParams<T>&);                    \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                      \
  template BasicMatrix<T> linear(const BasicMatrix<T>&, const LinearParams<T>&);                            \
  template BasicTensor<T> pointwise_linear(const BasicTensor<T>&, std::span<const T>, std::span<const T>,  \
                                           std::int64_t);                                                   \
  template BasicMatrix<T> global_avg_pool(const BasicTensor<T>&);                                           \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                  \
  template BasicTensor<T> split_heads(const BasicTensor<T>&, std::int64_t);                                 \
  template BasicTensor<T> merge_heads(const BasicTensor<T>&, std::int64_t, std::int64_t);                   \
  template BasicTensor<T> batched_matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool);               \
  template BasicTensor<T> softmax_last(const BasicTensor<T>&);

NEXTVIT_INSTANTIATE(float)
NEXTVIT_INSTANTIATE(double)

#undef NEXTVIT_INSTANTIATE

}  // namespace nextvit
