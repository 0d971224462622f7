#include "nextvit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nextvit {

namespace {

enum class Op {
  Leaf,
  Add,
  Concat,
  Slice,
  Conv2d,
  AvgPool,
  BatchNorm,
  LayerNorm,
  Relu,
  Gelu,
  Linear,
  GlobalAvgPool,
  Scale,
  SplitHeads,
  MergeHeads,
  MatMul,
  Softmax,
  Sum,
  WeightedSum,
};

void accumulate(TensorD& dst, const TensorD& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

double gelu_grad(double x) {
  const double k = std::sqrt(2.0 / std::numbers::pi);
  const double a = 0.044715;
  const double u = k * (x + a * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * a * x * x);
}

}  // namespace

struct Tape::Node {
  Op op = Op::Leaf;
  std::vector<ValueId> inputs;
  TensorD value;
  ConvGeometry conv{};
  std::int64_t i0 = 0;
  std::int64_t i1 = 0;
  bool flag = false;
  double scalar = 0.0;
  std::vector<double> v0;
  std::vector<double> v1;
  TensorD aux;
};

const TensorD& Gradients::operator[](ValueId id) const {
  if (id >= grads_.size()) fail(ErrorKind::NotOnTape, "no gradient for value " + std::to_string(id));
  return grads_[id];
}

Tape::Tape() = default;
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

std::size_t Tape::size() const noexcept { return nodes_.size(); }

const Tape::Node& Tape::node(ValueId id) const {
  if (id >= nodes_.size()) fail(ErrorKind::NotOnTape, "value " + std::to_string(id) + " is not on this tape");
  return nodes_[id];
}

const TensorD& Tape::value(ValueId id) const { return node(id).value; }

ValueId Tape::push(Node n) {
  for (ValueId in : n.inputs) {
    if (in >= nodes_.size()) fail(ErrorKind::NotOnTape, "input " + std::to_string(in) + " is not on this tape");
  }
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

ValueId Tape::leaf(TensorD value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  Node n;
  n.op = Op::Add;
  n.inputs = {a, b};
  n.value = nextvit::add(value(a), value(b));
  return push(std::move(n));
}

ValueId Tape::concat_channels(ValueId a, ValueId b) {
  Node n;
  n.op = Op::Concat;
  n.inputs = {a, b};
  n.value = nextvit::concat_channels(value(a), value(b));
  return push(std::move(n));
}

ValueId Tape::slice_channels(ValueId x, std::int64_t begin, std::int64_t end) {
  Node n;
  n.op = Op::Slice;
  n.inputs = {x};
  n.i0 = begin;
  n.i1 = end;
  n.value = nextvit::slice_channels(value(x), begin, end);
  return push(std::move(n));
}

ValueId Tape::conv2d(ValueId x, ValueId weight, std::optional<ValueId> bias, const ConvGeometry& g) {
  Node n;
  n.op = Op::Conv2d;
  n.inputs = {x, weight};
  if (bias) n.inputs.push_back(*bias);
  n.conv = g;
  std::span<const double> b;
  if (bias) b = value(*bias).data();
  n.value = nextvit::conv2d<double>(value(x), value(weight).data(), b, g, ConvAlgo::Direct);
  return push(std::move(n));
}

ValueId Tape::avg_pool2d(ValueId x, std::int64_t kernel, std::int64_t stride, bool ceil_mode) {
  Node n;
  n.op = Op::AvgPool;
  n.inputs = {x};
  n.i0 = kernel;
  n.i1 = stride;
  n.flag = ceil_mode;
  n.value = nextvit::avg_pool2d(value(x), kernel, stride, ceil_mode);
  return push(std::move(n));
}

ValueId Tape::batch_norm(ValueId x, ValueId gamma, ValueId beta, std::vector<double> mean, std::vector<double> var,
                         double eps) {
  Node n;
  n.op = Op::BatchNorm;
  n.inputs = {x, gamma, beta};
  n.scalar = eps;
  n.value = batch_norm_infer<double>(value(x), value(gamma).data(), value(beta).data(), mean, var, eps);
  n.v0 = std::move(mean);
  n.v1 = std::move(var);
  return push(std::move(n));
}

ValueId Tape::layer_norm(ValueId x, ValueId gamma, ValueId beta, double eps) {
  Node n;
  n.op = Op::LayerNorm;
  n.inputs = {x, gamma, beta};
  n.scalar = eps;
  n.value = nextvit::layer_norm<double>(value(x), value(gamma).data(), value(beta).data(), eps);
  return push(std::move(n));
}

ValueId Tape::relu(ValueId x) {
  Node n;
  n.op = Op::Relu;
  n.inputs = {x};
  n.value = nextvit::relu(value(x));
  return push(std::move(n));
}

ValueId Tape::gelu(ValueId x) {
  Node n;
  n.op = Op::Gelu;
  n.inputs = {x};
  n.value = nextvit::gelu(value(x));
  return push(std::move(n));
}

ValueId Tape::linear(ValueId x, ValueId weight, std::optional<ValueId> bias, std::int64_t out_features) {
  Node n;
  n.op = Op::Linear;
  n.inputs = {x, weight};
  if (bias) n.inputs.push_back(*bias);
  n.i0 = out_features;
  std::span<const double> b;
  if (bias) b = value(*bias).data();
  n.value = pointwise_linear<double>(value(x), value(weight).data(), b, out_features);
  return push(std::move(n));
}

ValueId Tape::global_avg_pool(ValueId x) {
  Node n;
  n.op = Op::GlobalAvgPool;
  n.inputs = {x};
  const auto m = nextvit::global_avg_pool(value(x));
  n.value = TensorD(Shape{m.rows(), m.cols(), 1, 1}, std::vector<double>(m.data().begin(), m.data().end()));
  return push(std::move(n));
}

ValueId Tape::scale(ValueId x, double factor) {
  Node n;
  n.op = Op::Scale;
  n.inputs = {x};
  n.scalar = factor;
  n.value = nextvit::scale(value(x), factor);
  return push(std::move(n));
}

ValueId Tape::split_heads(ValueId x, std::int64_t head_dim) {
  Node n;
  n.op = Op::SplitHeads;
  n.inputs = {x};
  n.i0 = head_dim;
  n.value = nextvit::split_heads(value(x), head_dim);
  return push(std::move(n));
}

ValueId Tape::merge_heads(ValueId x, std::int64_t height, std::int64_t width) {
  Node n;
  n.op = Op::MergeHeads;
  n.inputs = {x};
  n.i0 = height;
  n.i1 = width;
  n.value = nextvit::merge_heads(value(x), height, width);
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b, bool transpose_b) {
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a, b};
  n.flag = transpose_b;
  n.value = batched_matmul(value(a), value(b), transpose_b);
  return push(std::move(n));
}

ValueId Tape::softmax(ValueId x) {
  Node n;
  n.op = Op::Softmax;
  n.inputs = {x};
  n.value = softmax_last(value(x));
  return push(std::move(n));
}

ValueId Tape::sum(ValueId x) {
  Node n;
  n.op = Op::Sum;
  n.inputs = {x};
  double total = 0.0;
  for (double v : value(x).data()) total += v;
  n.value = TensorD(Shape{1, 1, 1, 1}, total);
  return push(std::move(n));
}

ValueId Tape::weighted_sum(ValueId x, TensorD weights) {
  if (weights.shape() != value(x).shape()) {
    fail(ErrorKind::ShapeMismatch, "weighted_sum weights " + weights.shape().str() + " vs value " +
                                       value(x).shape().str());
  }
  Node n;
  n.op = Op::WeightedSum;
  n.inputs = {x};
  double total = 0.0;
  auto xv = value(x).data();
  auto wv = weights.data();
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * wv[i];
  n.value = TensorD(Shape{1, 1, 1, 1}, total);
  n.aux = std::move(weights);
  return push(std::move(n));
}

std::vector<bool> Tape::relu_pattern() const {
  std::vector<bool> pattern;
  for (const auto& n : nodes_) {
    if (n.op != Op::Relu) continue;
    for (double v : nodes_[n.inputs[0]].value.data()) pattern.push_back(v > 0.0);
  }
  return pattern;
}

namespace {

// conv2d adjoint: accumulates into dx, dw and (optionally) db.
void conv2d_backward(const TensorD& x, std::span<const double> w, const TensorD& gy, const ConvGeometry& g,
                     TensorD& dx, TensorD& dw, TensorD* db) {
  const Shape& xs = x.shape();
  const Shape& ys = gy.shape();
  const std::int64_t k = g.kernel;
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t cout_g = g.out_per_group();
  for (std::int64_t n = 0; n < ys.n; ++n) {
    for (std::int64_t oc = 0; oc < ys.c; ++oc) {
      const std::int64_t grp = oc / cout_g;
      for (std::int64_t oh = 0; oh < ys.h; ++oh) {
        for (std::int64_t ow = 0; ow < ys.w; ++ow) {
          const double gv = gy(n, oc, oh, ow);
          if (db) (*db)[oc] += gv;
          for (std::int64_t icg = 0; icg < cin_g; ++icg) {
            const std::int64_t ic = grp * cin_g + icg;
            for (std::int64_t kh = 0; kh < k; ++kh) {
              const std::int64_t ih = oh * g.stride - g.padding + kh;
              if (ih < 0 || ih >= xs.h) continue;
              for (std::int64_t kw = 0; kw < k; ++kw) {
                const std::int64_t iw = ow * g.stride - g.padding + kw;
                if (iw < 0 || iw >= xs.w) continue;
                const std::int64_t wi = ((oc * cin_g + icg) * k + kh) * k + kw;
                dx(n, ic, ih, iw) += w[static_cast<std::size_t>(wi)] * gv;
                dw[wi] += x(n, ic, ih, iw) * gv;
              }
            }
          }
        }
      }
    }
  }
}

void matmul_slices(const TensorD& a, bool ta, const TensorD& b, bool tb, TensorD& out) {
  // out[n,c] += op(a[n,c]) * op(b[n,c]) for small verification sizes.
  const Shape& sa = a.shape();
  const Shape& so = out.shape();
  const std::int64_t inner = ta ? sa.h : sa.w;
  for (std::int64_t n = 0; n < so.n; ++n) {
    for (std::int64_t c = 0; c < so.c; ++c) {
      for (std::int64_t i = 0; i < so.h; ++i) {
        for (std::int64_t j = 0; j < so.w; ++j) {
          double acc = 0.0;
          for (std::int64_t p = 0; p < inner; ++p) {
            const double av = ta ? a(n, c, p, i) : a(n, c, i, p);
            const double bv = tb ? b(n, c, j, p) : b(n, c, p, j);
            acc += av * bv;
          }
          out(n, c, i, j) += acc;
        }
      }
    }
  }
}

}  // namespace

Gradients Tape::backward(ValueId output) const {
  const Node& out = node(output);
  if (out.value.size() != 1) {
    fail(ErrorKind::ShapeMismatch, "backward requires a scalar output, got " + out.value.shape().str());
  }
  std::vector<TensorD> grads(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  auto ensure = [&](ValueId id) -> TensorD& {
    if (!live[id]) {
      grads[id] = TensorD(nodes_[id].value.shape());
      live[id] = true;
    }
    return grads[id];
  };
  ensure(output)[0] = 1.0;

  for (ValueId id = output + 1; id-- > 0;) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    const TensorD& gy = grads[id];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(ensure(n.inputs[0]), gy);
        accumulate(ensure(n.inputs[1]), gy);
        break;
      case Op::Concat: {
        const std::int64_t ca = nodes_[n.inputs[0]].value.shape().c;
        const std::int64_t cb = nodes_[n.inputs[1]].value.shape().c;
        accumulate(ensure(n.inputs[0]), nextvit::slice_channels(gy, 0, ca));
        accumulate(ensure(n.inputs[1]), nextvit::slice_channels(gy, ca, ca + cb));
        break;
      }
      case Op::Slice: {
        TensorD& dx = ensure(n.inputs[0]);
        const Shape& gs = gy.shape();
        for (std::int64_t b = 0; b < gs.n; ++b)
          for (std::int64_t c = 0; c < gs.c; ++c) {
            auto src = gy.plane(b, c);
            auto dst = dx.plane(b, c + n.i0);
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
          }
        break;
      }
      case Op::Conv2d: {
        const TensorD& x = nodes_[n.inputs[0]].value;
        const TensorD& w = nodes_[n.inputs[1]].value;
        TensorD& dx = ensure(n.inputs[0]);
        TensorD& dw = ensure(n.inputs[1]);
        TensorD* db = n.inputs.size() > 2 ? &ensure(n.inputs[2]) : nullptr;
        conv2d_backward(x, w.data(), gy, n.conv, dx, dw, db);
        break;
      }
      case Op::AvgPool: {
        const Shape& xs = nodes_[n.inputs[0]].value.shape();
        const Shape& ys = gy.shape();
        TensorD& dx = ensure(n.inputs[0]);
        for (std::int64_t b = 0; b < ys.n; ++b)
          for (std::int64_t c = 0; c < ys.c; ++c)
            for (std::int64_t oh = 0; oh < ys.h; ++oh) {
              const std::int64_t h0 = oh * n.i1;
              const std::int64_t h1 = std::min(h0 + n.i0, xs.h);
              for (std::int64_t ow = 0; ow < ys.w; ++ow) {
                const std::int64_t w0 = ow * n.i1;
                const std::int64_t w1 = std::min(w0 + n.i0, xs.w);
                const double share = gy(b, c, oh, ow) / static_cast<double>((h1 - h0) * (w1 - w0));
                for (std::int64_t ih = h0; ih < h1; ++ih)
                  for (std::int64_t iw = w0; iw < w1; ++iw) dx(b, c, ih, iw) += share;
              }
            }
        break;
      }
      case Op::BatchNorm: {
        const TensorD& x = nodes_[n.inputs[0]].value;
        const TensorD& gamma = nodes_[n.inputs[1]].value;
        TensorD& dx = ensure(n.inputs[0]);
        TensorD& dg = ensure(n.inputs[1]);
        TensorD& db = ensure(n.inputs[2]);
        const Shape& s = x.shape();
        for (std::int64_t c = 0; c < s.c; ++c) {
          const auto ci = static_cast<std::size_t>(c);
          const double inv = 1.0 / std::sqrt(n.v1[ci] + n.scalar);
          for (std::int64_t b = 0; b < s.n; ++b) {
            auto xs = x.plane(b, c);
            auto gs = gy.plane(b, c);
            auto ds = dx.plane(b, c);
            for (std::size_t i = 0; i < xs.size(); ++i) {
              ds[i] += gs[i] * gamma[c] * inv;
              dg[c] += gs[i] * (xs[i] - n.v0[ci]) * inv;
              db[c] += gs[i];
            }
          }
        }
        break;
      }
      case Op::LayerNorm: {
        const TensorD& x = nodes_[n.inputs[0]].value;
        const TensorD& gamma = nodes_[n.inputs[1]].value;
        TensorD& dx = ensure(n.inputs[0]);
        TensorD& dg = ensure(n.inputs[1]);
        TensorD& db = ensure(n.inputs[2]);
        const Shape& s = x.shape();
        const double cn = static_cast<double>(s.c);
        std::vector<double> xhat(static_cast<std::size_t>(s.c));
        std::vector<double> dxhat(static_cast<std::size_t>(s.c));
        for (std::int64_t b = 0; b < s.n; ++b)
          for (std::int64_t h = 0; h < s.h; ++h)
            for (std::int64_t w = 0; w < s.w; ++w) {
              double mean = 0.0;
              for (std::int64_t c = 0; c < s.c; ++c) mean += x(b, c, h, w);
              mean /= cn;
              double var = 0.0;
              for (std::int64_t c = 0; c < s.c; ++c) var += (x(b, c, h, w) - mean) * (x(b, c, h, w) - mean);
              const double inv = 1.0 / std::sqrt(var / cn + n.scalar);
              double m1 = 0.0;
              double m2 = 0.0;
              for (std::int64_t c = 0; c < s.c; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                xhat[ci] = (x(b, c, h, w) - mean) * inv;
                const double g = gy(b, c, h, w);
                dxhat[ci] = g * gamma[c];
                dg[c] += g * xhat[ci];
                db[c] += g;
                m1 += dxhat[ci];
                m2 += dxhat[ci] * xhat[ci];
              }
              m1 /= cn;
              m2 /= cn;
              for (std::int64_t c = 0; c < s.c; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                dx(b, c, h, w) += inv * (dxhat[ci] - m1 - xhat[ci] * m2);
              }
            }
        break;
      }
      case Op::Relu: {
        auto xv = nodes_[n.inputs[0]].value.data();
        auto dx = ensure(n.inputs[0]).data();
        auto gv = gy.data();
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += xv[i] > 0.0 ? gv[i] : 0.0;
        break;
      }
      case Op::Gelu: {
        auto xv = nodes_[n.inputs[0]].value.data();
        auto dx = ensure(n.inputs[0]).data();
        auto gv = gy.data();
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += gv[i] * gelu_grad(xv[i]);
        break;
      }
      case Op::Linear: {
        const TensorD& x = nodes_[n.inputs[0]].value;
        const TensorD& w = nodes_[n.inputs[1]].value;
        TensorD& dx = ensure(n.inputs[0]);
        TensorD& dw = ensure(n.inputs[1]);
        TensorD* db = n.inputs.size() > 2 ? &ensure(n.inputs[2]) : nullptr;
        const Shape& xs = x.shape();
        const std::int64_t out_f = n.i0;
        for (std::int64_t b = 0; b < xs.n; ++b)
          for (std::int64_t o = 0; o < out_f; ++o) {
            auto gs = gy.plane(b, o);
            for (std::int64_t i = 0; i < xs.c; ++i) {
              const double wv = w[o * xs.c + i];
              auto xsrc = x.plane(b, i);
              auto dxd = dx.plane(b, i);
              double acc = 0.0;
              for (std::size_t p = 0; p < gs.size(); ++p) {
                dxd[p] += wv * gs[p];
                acc += gs[p] * xsrc[p];
              }
              dw[o * xs.c + i] += acc;
            }
            if (db) {
              for (double gv : gs) (*db)[o] += gv;
            }
          }
        break;
      }
      case Op::GlobalAvgPool: {
        TensorD& dx = ensure(n.inputs[0]);
        const Shape& xs = dx.shape();
        const double inv = 1.0 / static_cast<double>(xs.spatial());
        for (std::int64_t b = 0; b < xs.n; ++b)
          for (std::int64_t c = 0; c < xs.c; ++c) {
            const double share = gy(b, c, 0, 0) * inv;
            for (auto& v : dx.plane(b, c)) v += share;
          }
        break;
      }
      case Op::Scale: {
        auto dx = ensure(n.inputs[0]).data();
        auto gv = gy.data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gv[i] * n.scalar;
        break;
      }
      case Op::SplitHeads: {
        const Shape& s = gy.shape();  // (n, heads, tokens, head_dim)
        TensorD& dx = ensure(n.inputs[0]);
        for (std::int64_t b = 0; b < s.n; ++b)
          for (std::int64_t h = 0; h < s.c; ++h)
            for (std::int64_t d = 0; d < s.w; ++d) {
              auto dst = dx.plane(b, h * s.w + d);
              for (std::int64_t t = 0; t < s.h; ++t) dst[static_cast<std::size_t>(t)] += gy(b, h, t, d);
            }
        break;
      }
      case Op::MergeHeads: {
        TensorD& dx = ensure(n.inputs[0]);
        const Shape& s = dx.shape();  // (n, heads, tokens, head_dim)
        for (std::int64_t b = 0; b < s.n; ++b)
          for (std::int64_t h = 0; h < s.c; ++h)
            for (std::int64_t d = 0; d < s.w; ++d) {
              auto src = gy.plane(b, h * s.w + d);
              for (std::int64_t t = 0; t < s.h; ++t) dx(b, h, t, d) += src[static_cast<std::size_t>(t)];
            }
        break;
      }
      case Op::MatMul: {
        const TensorD& a = nodes_[n.inputs[0]].value;
        const TensorD& b = nodes_[n.inputs[1]].value;
        TensorD& da = ensure(n.inputs[0]);
        TensorD& db = ensure(n.inputs[1]);
        if (n.flag) {
          // y = a b^T: da = g b, db = g^T a
          matmul_slices(gy, false, b, false, da);
          matmul_slices(gy, true, a, false, db);
        } else {
          // y = a b: da = g b^T, db = a^T g
          matmul_slices(gy, false, b, true, da);
          matmul_slices(a, true, gy, false, db);
        }
        break;
      }
      case Op::Softmax: {
        const TensorD& y = n.value;
        TensorD& dx = ensure(n.inputs[0]);
        const std::int64_t cols = y.shape().w;
        const std::int64_t rows = y.size() / std::max<std::int64_t>(cols, 1);
        for (std::int64_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::int64_t j = 0; j < cols; ++j) dot += gy[r * cols + j] * y[r * cols + j];
          for (std::int64_t j = 0; j < cols; ++j) dx[r * cols + j] += y[r * cols + j] * (gy[r * cols + j] - dot);
        }
        break;
      }
      case Op::Sum: {
        const double g = gy[0];
        for (auto& v : ensure(n.inputs[0]).data()) v += g;
        break;
      }
      case Op::WeightedSum: {
        const double g = gy[0];
        auto dx = ensure(n.inputs[0]).data();
        auto wv = n.aux.data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * wv[i];
        break;
      }
    }
  }
  for (ValueId id = 0; id < nodes_.size(); ++id) {
    if (!live[id]) grads[id] = TensorD(nodes_[id].value.shape());
  }
  return Gradients(std::move(grads));
}

TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, const TensorD& x, double eps) {
  TensorD grad(x.shape());
  TensorD probe = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

GradReport compare_gradients(std::string name, const TensorD& analytic, const TensorD& numeric, double tolerance,
                             double floor, const std::vector<bool>* mask) {
  if (analytic.shape() != numeric.shape()) {
    fail(ErrorKind::ShapeMismatch, "gradient shapes differ: " + analytic.shape().str() + " vs " +
                                       numeric.shape().str());
  }
  GradReport r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  std::int64_t worst = -1;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    const double a = analytic[i];
    const double n = numeric[i];
    const double abs_err = std::abs(a - n);
    const double rel_err = abs_err / std::max({std::abs(a), std::abs(n), floor});
    r.max_abs_err = std::max(r.max_abs_err, abs_err);
    if (rel_err > r.max_rel_err || worst < 0) {
      r.max_rel_err = std::max(r.max_rel_err, rel_err);
      worst = i;
    }
  }
  if (worst >= 0) {
    const Shape& s = analytic.shape();
    const std::int64_t w = worst % s.w;
    const std::int64_t h = (worst / s.w) % s.h;
    const std::int64_t c = (worst / (s.w * s.h)) % s.c;
    const std::int64_t b = worst / (s.w * s.h * s.c);
    r.worst_coordinate = Shape{b, c, h, w};
  }
  r.passed = std::isfinite(r.max_rel_err) && r.max_rel_err < tolerance;
  return r;
}

}  // namespace nextvit
