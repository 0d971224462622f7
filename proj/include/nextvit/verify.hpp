#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nextvit/blocks.hpp"
#include "nextvit/graph.hpp"
#include "nextvit/model.hpp"
#include "nextvit/nn_ops.hpp"
#include "nextvit/param_set.hpp"
#include "nextvit/tape.hpp"
#include "nextvit/tensor.hpp"

namespace nextvit::verify {

// Scalar reference implementations, written as plain loops in double.

TensorD naive_conv2d(const TensorD& x, std::span<const double> weight, std::span<const double> bias,
                     const ConvGeometry& g);
/// Window means with k = stride; ceil_mode keeps partial windows.
TensorD naive_avg_pool(const TensorD& x, std::int64_t k, bool ceil_mode);
std::vector<double> naive_softmax(std::span<const double> row);
TensorD naive_batch_norm(const TensorD& x, std::span<const double> gamma, std::span<const double> beta,
                         std::span<const double> mean, std::span<const double> var, double eps = kNormEps);
TensorD naive_layer_norm(const TensorD& x, std::span<const double> gamma, std::span<const double> beta,
                         double eps = kNormEps);
/// Explicit query/key loops over tokens; parameter names relative to prefix.
TensorD brute_force_attention(const TensorD& x, const EMHSASpec& spec, const ParamSet& params,
                              const std::string& prefix = {});
/// MHCA computed with naive convolutions (dense when there is one head).
TensorD naive_mhca(const TensorD& x, const MHCASpec& spec, const ParamSet& params, const std::string& prefix = {});

/// init_from_decls followed by random norm affines, running statistics and
/// biases, so that no parameter sits at a special value.
ParamSet random_params(const std::vector<ParamDecl>& decls, std::uint64_t seed);

/// Four-stage hybrid with narrow widths and head_dim 8, for 32x32 inputs.
ModelSpec tiny_model_spec();

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

std::string format(const CheckResult& r);
std::string format(const GradReport& r);

/// Oracle-equivalence suites: kernels, attention, MHCA, folding, batching.
std::vector<CheckResult> run_selftest(std::uint64_t seed = 2024);

/// Individual selftest groups, also used by the acceptance suite.
CheckResult check_emhsa_bruteforce(std::int64_t h, std::int64_t w, std::int64_t sr, std::uint64_t seed);
CheckResult check_grouped_conv(Precision precision, std::uint64_t seed);
CheckResult check_mhca_dense(std::uint64_t seed);

struct GradCase {
  std::string name;
  std::vector<std::string> input_names;
  std::vector<TensorD> inputs;
  /// Records the computation; returns the output and the leaf of each input.
  std::function<std::pair<ValueId, std::vector<ValueId>>(Tape&, const std::vector<TensorD>&)> build;
  bool kink_aware = false;  // skip coordinates whose +-eps probes change any ReLU sign
  std::int64_t max_coords = -1;  // per input; -1 checks every coordinate
};

/// Analytic gradient of a fixed random projection of the output against
/// central differences (eps 1e-4), one report per input.
std::vector<GradReport> run_grad_case(const GradCase& c, std::uint64_t seed, double eps = 1e-4, double tol = 1e-3);

/// Every primitive and both blocks at spatial size min(8, max_size).
std::vector<GradReport> run_gradcheck(std::int64_t max_size = 8, std::uint64_t seed = 7);

}  // namespace nextvit::verify
