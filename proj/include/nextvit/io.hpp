#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nextvit/model.hpp"
#include "nextvit/param_set.hpp"
#include "nextvit/tensor.hpp"

namespace nextvit {

// Weight container: "NVTW", version 1, u32 entry count, then per entry
// u16 name length, name bytes, u8 dtype (0 = f32), u8 ndim, u32 dims, data.
// All integers and floats little-endian. Entries are written in key order.

inline constexpr std::uint8_t kWeightVersion = 1;

std::string encode_weights(const ParamSet& params);
/// BadMagic, BadVersion, TruncatedFile, TrailingData, DuplicateName,
/// DtypeUnsupported.
ParamSet decode_weights(std::string_view bytes);

void save_weights(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_weights(const std::filesystem::path& path);

/// Input tensors reuse the container with a single 4-d entry named "input".
void save_input(const Tensor& x, const std::filesystem::path& path);
Tensor load_input(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// JSON model configuration. Top-level keys: variant, pattern, stages,
/// num_classes, norm_act, attn_scale_mode, shrink_ratio, sr_ratios,
/// head_dim, mlp_ratios. Without variant, pattern or stages the S layout is
/// used. Syntax errors raise ParseError with the line; unknown keys raise
/// UnknownKey.
ModelSpec parse_config(std::string_view text);
ModelSpec load_config(const std::filesystem::path& path);

/// Canonical document with explicit stages; parse_config(render_config(s)) == s.
std::string render_config(const ModelSpec& spec);

/// "bn_relu", "ln_gelu", "id_relu", ...
std::string norm_act_name(NormKind norm, ActKind act);

struct BenchOptions {
  std::int64_t batch = 1;
  std::int64_t height = 224;
  std::int64_t width = 224;
  std::int64_t warmup = 10;
  std::int64_t iters = 50;
  bool per_block = false;
  int threads = 1;
  ConvAlgo algo = ConvAlgo::Im2col;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string target;  // "model", "stem", "stages.i.blocks.j" or "head"
  std::int64_t batch = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t warmup = 0;
  std::int64_t iters = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::vector<double> samples_ms;
};

struct BenchReport {
  int threads = 1;
  ConvAlgo algo = ConvAlgo::Im2col;
  std::vector<BenchRow> rows;
};

double median(std::vector<double> values);
/// Nearest-rank percentile, p in (0, 100].
double percentile(std::vector<double> values, double p);

/// Times whole forwards on a steady clock. With per_block each measured
/// iteration also attributes time to the stem, every block (a stage's patch
/// embedding counts toward its first block) and the head.
BenchReport bench_run(const ModelSpec& spec, const ParamSet& params, const BenchOptions& opts);

std::string bench_csv(const BenchReport& report);
std::string bench_table(const BenchReport& report);

std::string to_string(ConvAlgo algo);
ConvAlgo parse_conv_algo(std::string_view name);

}  // namespace nextvit
