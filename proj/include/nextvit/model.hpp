#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nextvit/blocks.hpp"
#include "nextvit/exec.hpp"
#include "nextvit/graph.hpp"
#include "nextvit/param_set.hpp"

namespace nextvit {

enum class BlockType { NCB, NTB };

struct BlockSpec {
  BlockType type = BlockType::NCB;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  bool operator==(const BlockSpec&) const = default;
};

struct PatchEmbedSpec {
  bool downsample = true;
  std::int64_t out_channels = 0;
  bool operator==(const PatchEmbedSpec&) const = default;
};

struct StageSpec {
  PatchEmbedSpec embed;
  std::vector<BlockSpec> blocks;
  std::int64_t sr_ratio = 1;

  std::int64_t count(BlockType t) const;
  std::int64_t out_channels() const { return blocks.empty() ? embed.out_channels : blocks.back().out_channels; }
  bool operator==(const StageSpec&) const = default;
};

/// Four 3x3 conv + norm + act layers.
struct StemSpec {
  std::vector<std::int64_t> channels{64, 32, 64, 64};
  std::vector<int> strides{2, 1, 1, 2};
  bool operator==(const StemSpec&) const = default;
};

struct ModelSpec {
  std::int64_t in_channels = 3;
  StemSpec stem;
  std::vector<StageSpec> stages;
  std::int64_t num_classes = 1000;
  NormKind norm = NormKind::BatchNorm;
  ActKind act = ActKind::ReLU;
  AttnScaleMode attn_scale_mode = AttnScaleMode::Sqrt;
  double shrink_ratio = 0.75;
  std::int64_t head_dim = 32;
  double ncb_mlp_ratio = 3.0;
  double ntb_mlp_ratio = 2.0;

  NCBSpec ncb(std::size_t stage, std::size_t block) const;
  NTBSpec ntb(std::size_t stage, std::size_t block) const;
  std::int64_t block_count() const;
  /// Overall spatial reduction from input to the last stage.
  std::int64_t reduction() const;
  /// Channel chaining, head divisibility and branch splits.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

enum class Variant { S, B, L };

std::string to_string(Variant v);
/// Accepts "S", "B", "L" (case-insensitive); InvalidArgument otherwise.
Variant parse_variant(std::string_view name);

ModelSpec build_variant(Variant v, std::int64_t num_classes = 1000);

/// Stage letters: C = convolution blocks only, T = transformer blocks only,
/// H = (NCB x N + NTB) x L.
struct HybridPattern {
  std::array<char, 4> letters{'C', 'H', 'H', 'H'};
  std::array<std::int64_t, 4> n{3, 3, 4, 2};
  std::array<std::int64_t, 4> l{1, 1, 2, 1};

  /// Letters separated by optional whitespace, e.g. "C H H H" or "CCCT".
  static HybridPattern parse(std::string_view letters);
  static HybridPattern for_variant(Variant v);
  std::string str() const;
  bool operator==(const HybridPattern&) const = default;
};

struct StageWidths {
  std::int64_t ncb = 0;
  std::int64_t ntb = 0;
  bool operator==(const StageWidths&) const = default;
};

/// 96/128, 192/256, 384/512, 768/1024.
std::array<StageWidths, 4> default_widths();

/// InvalidPattern for bad letters or depths below 1.
ModelSpec build_hybrid(const HybridPattern& pattern, const std::array<StageWidths, 4>& widths = default_widths(),
                       std::int64_t num_classes = 1000);

/// Declared arrays of a model; dims do not depend on input size.
std::vector<ParamDecl> model_params(const ModelSpec& spec);
Graph trace_graph(const ModelSpec& spec, std::int64_t height = 224, std::int64_t width = 224, std::int64_t batch = 1);

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

struct ForwardOptions {
  ScopeObserver* observer = nullptr;
  std::vector<Shape>* stage_trace = nullptr;  // receives the stem and per-stage output shapes
  ConvAlgo algo = default_conv_algo();
};

/// ShapeMismatch unless x is (n, in_channels, H, W) with H, W divisible by
/// the model's reduction.
void check_input(const ModelSpec& spec, const Shape& x);

template <class Ex>
ValueOf<Ex> model_forward(Ex& ex, const ModelSpec& spec, ValueOf<Ex> x, std::vector<Shape>* trace = nullptr) {
  for (std::size_t i = 0; i < spec.stem.channels.size(); ++i) {
    auto guard = ex.scope("stem." + std::to_string(i));
    const int stride = spec.stem.strides[i];
    x = conv_norm(ex, x, "conv", {spec.stem.channels[i], 3, stride, 1}, "norm", spec.norm);
    x = ex.act(x, spec.act);
  }
  if (trace) trace->push_back(ex.shape(x));
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const StageSpec& st = spec.stages[s];
    const std::string base = "stages." + std::to_string(s);
    {
      auto guard = ex.scope(base + ".embed");
      if (st.embed.downsample) x = ex.avg_pool(x, 2, false);
      x = conv_norm(ex, x, "conv", {st.embed.out_channels, 1}, "norm", spec.norm);
    }
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      auto guard = ex.scope(base + ".blocks." + std::to_string(b));
      x = st.blocks[b].type == BlockType::NCB ? ncb(ex, x, spec.ncb(s, b)) : ntb(ex, x, spec.ntb(s, b));
    }
    if (trace) trace->push_back(ex.shape(x));
  }
  auto guard = ex.scope("head");
  auto pooled = ex.global_avg_pool(x);
  return ex.linear(pooled, "", spec.num_classes);
}

Matrix forward(const ModelSpec& spec, const ParamSet& params, const Tensor& x, const ForwardOptions& opts = {});
MatrixD forward(const ModelSpec& spec, const ParamSet& params, const TensorD& x, const ForwardOptions& opts = {});

/// Argmax per row (first maximum on ties).
template <typename T>
std::vector<std::int64_t> argmax_rows(const BasicMatrix<T>& m);

}  // namespace nextvit
