#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "nextvit/param_set.hpp"
#include "nextvit/tensor.hpp"

namespace nextvit {

enum class NormKind { BatchNorm, LayerNorm, Identity };
enum class ActKind { ReLU, GELU };
enum class AttnScaleMode { Sqrt, Linear };

std::string to_string(NormKind k);
std::string to_string(ActKind k);
std::string to_string(AttnScaleMode m);

/// Geometry of one convolution as a block describes it; the input width comes
/// from the value it is applied to.
struct ConvGeom {
  std::int64_t out = 0;
  std::int64_t kernel = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  bool bias = false;
};

struct MHCASpec {
  std::int64_t channels = 0;
  std::int64_t head_dim = 32;
  NormKind norm = NormKind::BatchNorm;
  ActKind act = ActKind::ReLU;

  std::int64_t heads() const noexcept { return head_dim > 0 ? channels / head_dim : 0; }
  /// HeadMismatch unless channels is a positive multiple of head_dim.
  void validate() const;
  bool operator==(const MHCASpec&) const = default;
};

struct NCBSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t head_dim = 32;
  double mlp_ratio = 3.0;
  NormKind norm = NormKind::BatchNorm;
  ActKind act = ActKind::ReLU;

  MHCASpec mhca() const { return {out_channels, head_dim, norm, act}; }
  std::int64_t hidden() const;
  bool has_adapter() const noexcept { return in_channels != out_channels; }
  void validate() const;
  bool operator==(const NCBSpec&) const = default;
};

struct EMHSASpec {
  std::int64_t channels = 0;
  std::int64_t head_dim = 32;
  std::int64_t sr_ratio = 1;
  NormKind norm = NormKind::BatchNorm;
  AttnScaleMode scale_mode = AttnScaleMode::Sqrt;

  std::int64_t heads() const noexcept { return head_dim > 0 ? channels / head_dim : 0; }
  double scale() const;
  /// Key tokens per axis after pooling: ceil(extent / sr_ratio).
  std::int64_t key_extent(std::int64_t extent) const noexcept { return (extent + sr_ratio - 1) / sr_ratio; }
  void validate() const;
  bool operator==(const EMHSASpec&) const = default;
};

/// Output channels of an NTB divided between the attention path (high) and
/// the convolutional path (low).
struct BranchSplit {
  std::int64_t high = 0;
  std::int64_t low = 0;
  bool operator==(const BranchSplit&) const = default;
};

/// c_hi = round-half-up(r * out), snapped to the nearest multiple of head_dim
/// (ties go to the attention path). Throws InvalidRatio for r outside [0, 1]
/// or when a non-empty branch is not a multiple of head_dim.
BranchSplit split_branches(std::int64_t out_channels, double shrink_ratio, std::int64_t head_dim);

struct NTBSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t head_dim = 32;
  std::int64_t sr_ratio = 1;
  double shrink_ratio = 0.75;
  double mlp_ratio = 2.0;
  NormKind norm = NormKind::BatchNorm;
  ActKind act = ActKind::ReLU;
  AttnScaleMode scale_mode = AttnScaleMode::Sqrt;

  BranchSplit split() const { return split_branches(out_channels, shrink_ratio, head_dim); }
  EMHSASpec emhsa() const { return {split().high, head_dim, sr_ratio, norm, scale_mode}; }
  MHCASpec mhca() const { return {split().low, head_dim, norm, act}; }
  std::int64_t hidden() const;
  void validate() const;
  bool operator==(const NTBSpec&) const = default;
};

template <class Ex>
using ValueOf = typename Ex::Value;

template <class Ex>
ValueOf<Ex> conv_norm(Ex& ex, const ValueOf<Ex>& x, std::string_view conv_name, ConvGeom g,
                      std::string_view norm_name, NormKind norm) {
  g.bias = norm == NormKind::Identity;
  auto y = ex.conv2d(x, conv_name, g);
  return ex.norm(y, norm_name, norm);
}

template <class Ex>
ValueOf<Ex> mhca(Ex& ex, const ValueOf<Ex>& x, const MHCASpec& spec) {
  spec.validate();
  if (ex.shape(x).c != spec.channels) {
    fail(ErrorKind::ShapeMismatch,
         "mhca expects " + std::to_string(spec.channels) + " channels, got " + ex.shape(x).str());
  }
  auto guard = ex.scope("mhca");
  const auto c = spec.channels;
  auto y = conv_norm(ex, x, "group_conv", {c, 3, 1, 1, static_cast<int>(spec.heads())}, "norm1", spec.norm);
  y = ex.act(y, spec.act);
  return conv_norm(ex, y, "proj", {c, 1}, "norm2", spec.norm);
}

template <class Ex>
ValueOf<Ex> mlp(Ex& ex, const ValueOf<Ex>& x, std::int64_t hidden, NormKind norm, ActKind act) {
  auto guard = ex.scope("mlp");
  const auto c = ex.shape(x).c;
  auto y = conv_norm(ex, x, "fc1", {hidden, 1}, "norm1", norm);
  y = ex.act(y, act);
  return conv_norm(ex, y, "fc2", {c, 1}, "norm2", norm);
}

template <class Ex>
ValueOf<Ex> ncb(Ex& ex, ValueOf<Ex> x, const NCBSpec& spec) {
  spec.validate();
  if (ex.shape(x).c != spec.in_channels) {
    fail(ErrorKind::ShapeMismatch,
         "ncb expects " + std::to_string(spec.in_channels) + " channels, got " + ex.shape(x).str());
  }
  if (spec.has_adapter()) {
    auto guard = ex.scope("adapter");
    x = conv_norm(ex, x, "conv", {spec.out_channels, 1}, "norm", spec.norm);
  }
  auto y = ex.add(mhca(ex, x, spec.mhca()), x);
  return ex.add(mlp(ex, y, spec.hidden(), spec.norm, spec.act), y);
}

template <class Ex>
ValueOf<Ex> emhsa(Ex& ex, const ValueOf<Ex>& x, const EMHSASpec& spec) {
  spec.validate();
  const Shape s = ex.shape(x);
  if (s.c != spec.channels) {
    fail(ErrorKind::ShapeMismatch,
         "emhsa expects " + std::to_string(spec.channels) + " channels, got " + s.str());
  }
  auto guard = ex.scope("emhsa");
  const auto c = spec.channels;
  auto q = ex.linear(x, "q", c);
  auto pooled = spec.sr_ratio > 1 ? ex.avg_pool(x, spec.sr_ratio, true) : x;
  pooled = ex.norm(pooled, "kv_norm", spec.norm);
  auto k = ex.linear(pooled, "k", c);
  auto v = ex.linear(pooled, "v", c);
  auto qh = ex.split_heads(q, spec.head_dim);
  auto kh = ex.split_heads(k, spec.head_dim);
  auto vh = ex.split_heads(v, spec.head_dim);
  auto attn = ex.softmax(ex.scale(ex.matmul_nt(qh, kh), spec.scale()));
  auto o = ex.merge_heads(ex.matmul_nn(attn, vh), s.h, s.w);
  return ex.linear(o, "proj", c);
}

template <class Ex>
ValueOf<Ex> ntb(Ex& ex, const ValueOf<Ex>& x, const NTBSpec& spec) {
  spec.validate();
  if (ex.shape(x).c != spec.in_channels) {
    fail(ErrorKind::ShapeMismatch,
         "ntb expects " + std::to_string(spec.in_channels) + " channels, got " + ex.shape(x).str());
  }
  const BranchSplit split = spec.split();
  auto project = [&](const ValueOf<Ex>& v, std::string_view name, std::int64_t width) {
    auto guard = ex.scope(name);
    return conv_norm(ex, v, "conv", {width, 1}, "norm", spec.norm);
  };
  const std::int64_t first = split.high > 0 ? split.high : split.low;
  auto z = spec.in_channels == first ? x : project(x, "proj_in", first);
  ValueOf<Ex> out = z;
  if (split.high > 0) {
    z = ex.add(emhsa(ex, z, spec.emhsa()), z);
    out = z;
  }
  if (split.low > 0) {
    auto lo = split.high > 0 ? project(z, "proj_mid", split.low) : z;
    lo = ex.add(mhca(ex, lo, spec.mhca()), lo);
    out = split.high > 0 ? ex.concat_channels(z, lo) : lo;
  }
  return ex.add(mlp(ex, out, spec.hidden(), spec.norm, spec.act), out);
}

// Eager entry points. Parameter names are relative to `prefix` (empty for
// top level), e.g. "mhca.group_conv.weight".

Tensor mhca_forward(const Tensor& x, const MHCASpec& spec, const ParamSet& params, std::string_view prefix = {});
TensorD mhca_forward(const TensorD& x, const MHCASpec& spec, const ParamSet& params, std::string_view prefix = {});
Tensor ncb_forward(const Tensor& x, const NCBSpec& spec, const ParamSet& params, std::string_view prefix = {});
TensorD ncb_forward(const TensorD& x, const NCBSpec& spec, const ParamSet& params, std::string_view prefix = {});
Tensor emhsa_forward(const Tensor& x, const EMHSASpec& spec, const ParamSet& params, std::string_view prefix = {});
TensorD emhsa_forward(const TensorD& x, const EMHSASpec& spec, const ParamSet& params,
                      std::string_view prefix = {});
Tensor ntb_forward(const Tensor& x, const NTBSpec& spec, const ParamSet& params, std::string_view prefix = {});
TensorD ntb_forward(const TensorD& x, const NTBSpec& spec, const ParamSet& params, std::string_view prefix = {});

}  // namespace nextvit
