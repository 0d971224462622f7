#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nextvit/model.hpp"

namespace nextvit {

struct CostEntry {
  std::string path;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

/// FLOPs are multiply-accumulates. Pooling, norms, activations, softmax and
/// scaling count as zero; running statistics are not parameters.
struct CostReport {
  std::int64_t params_total = 0;
  std::int64_t flops_total = 0;
  std::vector<CostEntry> modules;  // stem, stages.i.embed, stages.i.blocks.j, head
};

/// Module a node path belongs to: "stem", "stages.i.embed",
/// "stages.i.blocks.j" or "head".
std::string module_of(const std::string& path);

CostReport count_params(const ModelSpec& spec);
CostReport count_flops(const ModelSpec& spec, std::int64_t height = 224, std::int64_t width = 224);
/// Both columns at once.
CostReport count_costs(const ModelSpec& spec, std::int64_t height = 224, std::int64_t width = 224);

struct FoldResult {
  ModelSpec spec;
  ParamSet params;
};

/// Absorbs every batch norm into the adjacent conv or linear. A norm directly
/// after a conv/linear that feeds nothing else is folded into its output
/// side; a norm feeding only linears is folded into their input side.
/// Throws NotFoldable naming the node path for layer norms or any other
/// placement.
FoldResult fold_batchnorm(const ModelSpec& spec, const ParamSet& params);

/// Replaces every batch norm's running statistics with the per-channel mean
/// and variance its input takes on `batch`, in execution order.
void calibrate_batchnorm(const ModelSpec& spec, ParamSet& params, const Tensor& batch);

/// gamma ~ U(0.5, 1.5), beta ~ N(0, 0.1^2) for every norm.
void randomize_norm_affine(ParamSet& params, std::uint64_t seed);

struct EquivReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::vector<bool> argmax_match;
  std::int64_t samples = 0;
  double tolerance = 0.0;
  bool passed = false;

  bool all_argmax() const;
};

/// Runs both models on n_samples standard-normal inputs of the given size.
/// Throws SignatureMismatch when input channels, classes or reduction differ.
EquivReport check_equivalence(const ModelSpec& spec_a, const ParamSet& params_a, const ModelSpec& spec_b,
                              const ParamSet& params_b, std::int64_t n_samples, std::uint64_t seed, double tol,
                              std::int64_t height = 224, std::int64_t width = 224);

/// Same comparison for arbitrary functions of one (1, ...) input; rows are
/// flattened outputs.
template <typename T>
using TensorFn = std::function<BasicTensor<T>(const BasicTensor<T>&)>;

template <typename T>
EquivReport check_equivalence(const TensorFn<T>& a, const TensorFn<T>& b, Shape input, std::int64_t n_samples,
                              std::uint64_t seed, double tol);

std::string format_report(const EquivReport& r);

}  // namespace nextvit
