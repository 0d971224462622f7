#include <algorithm>
#include <cmath>

#include "nextvit/analysis.hpp"
#include "nextvit/verify.hpp"

namespace nextvit::verify {

namespace {

std::string join(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

std::vector<double> as_double(const ParamSet& params, const std::string& name) {
  const auto& d = params.at(name).data;
  return std::vector<double>(d.begin(), d.end());
}

TensorD apply_norm(const TensorD& x, NormKind kind, const ParamSet& params, const std::string& base) {
  if (kind == NormKind::Identity) return x;
  const auto gamma = as_double(params, base + ".weight");
  const auto beta = as_double(params, base + ".bias");
  if (kind == NormKind::LayerNorm) return naive_layer_norm(x, gamma, beta);
  return naive_batch_norm(x, gamma, beta, as_double(params, base + ".running_mean"),
                          as_double(params, base + ".running_var"));
}

TensorD apply_act(TensorD x, ActKind act) {
  for (auto& v : x.data()) {
    if (act == ActKind::ReLU) {
      v = v > 0.0 ? v : 0.0;
    } else {
      const double k = std::sqrt(2.0 / 3.14159265358979323846);
      v = 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
    }
  }
  return x;
}

// out[o, t] = b[o] + sum_i w[o, i] x[i, t] at every position.
TensorD naive_pointwise(const TensorD& x, std::span<const double> w, std::span<const double> b, std::int64_t out) {
  const Shape& s = x.shape();
  TensorD y(Shape{s.n, out, s.h, s.w});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t o = 0; o < out; ++o)
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t ww = 0; ww < s.w; ++ww) {
          double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(o)];
          for (std::int64_t i = 0; i < s.c; ++i) acc += w[static_cast<std::size_t>(o * s.c + i)] * x(n, i, h, ww);
          y(n, o, h, ww) = acc;
        }
  return y;
}

}  // namespace

TensorD naive_conv2d(const TensorD& x, std::span<const double> weight, std::span<const double> bias,
                     const ConvGeometry& g) {
  g.validate();
  const Shape& s = x.shape();
  if (s.c != g.in_channels) fail(ErrorKind::ShapeMismatch, "naive_conv2d channel mismatch");
  const std::int64_t oh_n = (s.h + 2 * g.padding - g.kernel) / g.stride + 1;
  const std::int64_t ow_n = (s.w + 2 * g.padding - g.kernel) / g.stride + 1;
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t cout_g = g.out_per_group();
  TensorD y(Shape{s.n, g.out_channels, oh_n, ow_n});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc)
      for (std::int64_t oh = 0; oh < oh_n; ++oh)
        for (std::int64_t ow = 0; ow < ow_n; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
          const std::int64_t grp = oc / cout_g;
          for (std::int64_t icg = 0; icg < cin_g; ++icg)
            for (std::int64_t kh = 0; kh < g.kernel; ++kh)
              for (std::int64_t kw = 0; kw < g.kernel; ++kw) {
                const std::int64_t ih = oh * g.stride - g.padding + kh;
                const std::int64_t iw = ow * g.stride - g.padding + kw;
                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                const double wv = weight[static_cast<std::size_t>(((oc * cin_g + icg) * g.kernel + kh) * g.kernel + kw)];
                acc += wv * x(n, grp * cin_g + icg, ih, iw);
              }
          y(n, oc, oh, ow) = acc;
        }
  return y;
}

TensorD naive_avg_pool(const TensorD& x, std::int64_t k, bool ceil_mode) {
  const Shape& s = x.shape();
  const std::int64_t oh_n = ceil_mode ? (s.h + k - 1) / k : s.h / k;
  const std::int64_t ow_n = ceil_mode ? (s.w + k - 1) / k : s.w / k;
  TensorD y(Shape{s.n, s.c, oh_n, ow_n});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t oh = 0; oh < oh_n; ++oh)
        for (std::int64_t ow = 0; ow < ow_n; ++ow) {
          double sum = 0.0;
          std::int64_t count = 0;
          for (std::int64_t ih = oh * k; ih < std::min(oh * k + k, s.h); ++ih)
            for (std::int64_t iw = ow * k; iw < std::min(ow * k + k, s.w); ++iw) {
              sum += x(n, c, ih, iw);
              ++count;
            }
          y(n, c, oh, ow) = sum / static_cast<double>(count);
        }
  return y;
}

std::vector<double> naive_softmax(std::span<const double> row) {
  double mx = row.empty() ? 0.0 : row[0];
  for (double v : row) mx = std::max(mx, v);
  std::vector<double> out;
  double total = 0.0;
  for (double v : row) {
    out.push_back(std::exp(v - mx));
    total += out.back();
  }
  for (double& v : out) v /= total;
  return out;
}

TensorD naive_batch_norm(const TensorD& x, std::span<const double> gamma, std::span<const double> beta,
                         std::span<const double> mean, std::span<const double> var, double eps) {
  TensorD y(x.shape());
  const Shape& s = x.shape();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w) {
          y(n, c, h, w) = (x(n, c, h, w) - mean[ci]) / std::sqrt(var[ci] + eps) * gamma[ci] + beta[ci];
        }
    }
  return y;
}

TensorD naive_layer_norm(const TensorD& x, std::span<const double> gamma, std::span<const double> beta,
                         double eps) {
  TensorD y(x.shape());
  const Shape& s = x.shape();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t h = 0; h < s.h; ++h)
      for (std::int64_t w = 0; w < s.w; ++w) {
        double mean = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) mean += x(n, c, h, w);
        mean /= static_cast<double>(s.c);
        double var = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) var += (x(n, c, h, w) - mean) * (x(n, c, h, w) - mean);
        var /= static_cast<double>(s.c);
        for (std::int64_t c = 0; c < s.c; ++c) {
          const auto ci = static_cast<std::size_t>(c);
          y(n, c, h, w) = (x(n, c, h, w) - mean) / std::sqrt(var + eps) * gamma[ci] + beta[ci];
        }
      }
  return y;
}

TensorD brute_force_attention(const TensorD& x, const EMHSASpec& spec, const ParamSet& params,
                              const std::string& prefix) {
  spec.validate();
  const Shape& s = x.shape();
  const std::string base = join(prefix, "emhsa");
  const std::int64_t c = spec.channels;
  const TensorD q = naive_pointwise(x, as_double(params, base + ".q.weight"), as_double(params, base + ".q.bias"), c);
  TensorD pooled = spec.sr_ratio > 1 ? naive_avg_pool(x, spec.sr_ratio, true) : x;
  pooled = apply_norm(pooled, spec.norm, params, base + ".kv_norm");
  const TensorD k =
      naive_pointwise(pooled, as_double(params, base + ".k.weight"), as_double(params, base + ".k.bias"), c);
  const TensorD v =
      naive_pointwise(pooled, as_double(params, base + ".v.weight"), as_double(params, base + ".v.bias"), c);
  const std::int64_t tokens = s.h * s.w;
  const std::int64_t keys = pooled.shape().h * pooled.shape().w;
  const std::int64_t d = spec.head_dim;
  const double scale = spec.scale();
  TensorD mixed(Shape{s.n, c, s.h, s.w});
  auto at = [](const TensorD& t, std::int64_t n, std::int64_t ch, std::int64_t token) {
    return t(n, ch, token / t.shape().w, token % t.shape().w);
  };
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t head = 0; head < spec.heads(); ++head) {
      for (std::int64_t t = 0; t < tokens; ++t) {
        std::vector<double> scores(static_cast<std::size_t>(keys));
        for (std::int64_t u = 0; u < keys; ++u) {
          double dot = 0.0;
          for (std::int64_t j = 0; j < d; ++j) dot += at(q, n, head * d + j, t) * at(k, n, head * d + j, u);
          scores[static_cast<std::size_t>(u)] = dot * scale;
        }
        const auto p = naive_softmax(scores);
        for (std::int64_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::int64_t u = 0; u < keys; ++u) acc += p[static_cast<std::size_t>(u)] * at(v, n, head * d + j, u);
          mixed(n, head * d + j, t / s.w, t % s.w) = acc;
        }
      }
    }
  }
  return naive_pointwise(mixed, as_double(params, base + ".proj.weight"), as_double(params, base + ".proj.bias"), c);
}

TensorD naive_mhca(const TensorD& x, const MHCASpec& spec, const ParamSet& params, const std::string& prefix) {
  spec.validate();
  const std::string base = join(prefix, "mhca");
  const bool bias = spec.norm == NormKind::Identity;
  const std::int64_t c = spec.channels;
  const ConvGeometry g1{c, c, 3, 1, 1, static_cast<int>(spec.heads())};
  std::vector<double> b1 = bias ? as_double(params, base + ".group_conv.bias") : std::vector<double>{};
  TensorD y = naive_conv2d(x, as_double(params, base + ".group_conv.weight"), b1, g1);
  y = apply_act(apply_norm(y, spec.norm, params, base + ".norm1"), spec.act);
  const ConvGeometry g2{c, c, 1, 1, 0, 1};
  std::vector<double> b2 = bias ? as_double(params, base + ".proj.bias") : std::vector<double>{};
  y = naive_conv2d(y, as_double(params, base + ".proj.weight"), b2, g2);
  return apply_norm(y, spec.norm, params, base + ".norm2");
}

ParamSet random_params(const std::vector<ParamDecl>& decls, std::uint64_t seed) {
  ParamSet p = init_from_decls(decls, seed);
  for (const auto& d : decls) {
    SplitMix64 rng(seed ^ fnv1a(d.name) ^ 0x9E3779B97F4A7C15ULL);
    auto& data = p.at(d.name).data;
    for (auto& v : data) {
      switch (d.role) {
        case ParamRole::Weight:
          break;
        case ParamRole::Bias:
        case ParamRole::Beta:
        case ParamRole::RunningMean:
          v = static_cast<float>(0.1 * rng.normal());
          break;
        case ParamRole::Gamma:
        case ParamRole::RunningVar:
          v = static_cast<float>(rng.uniform(0.5, 1.5));
          break;
      }
    }
  }
  return p;
}

}  // namespace nextvit::verify
