#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nextvit/nn_ops.hpp"
#include "nextvit/tensor.hpp"

namespace nextvit {

using ValueId = std::size_t;

/// Result of backward(): one gradient per recorded value. Values that do not
/// reach the output hold a zero tensor of their own shape.
class Gradients {
 public:
  explicit Gradients(std::vector<TensorD> grads) : grads_(std::move(grads)) {}
  const TensorD& operator[](ValueId id) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<TensorD> grads_;
};

/// Double-precision reverse-mode recorder. Every primitive evaluates eagerly,
/// stores its output and whatever it needs for the adjoint, and appends one
/// node; inputs always precede their consumers. Single-threaded.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ValueId leaf(TensorD value);
  const TensorD& value(ValueId id) const;
  std::size_t size() const noexcept;

  ValueId add(ValueId a, ValueId b);
  ValueId concat_channels(ValueId a, ValueId b);
  ValueId slice_channels(ValueId x, std::int64_t begin, std::int64_t end);
  /// weight holds (out, in/groups, k, k); bias holds out_channels values.
  ValueId conv2d(ValueId x, ValueId weight, std::optional<ValueId> bias, const ConvGeometry& g);
  ValueId avg_pool2d(ValueId x, std::int64_t kernel, std::int64_t stride, bool ceil_mode = false);
  /// Running statistics are constants; gamma and beta are differentiable.
  ValueId batch_norm(ValueId x, ValueId gamma, ValueId beta, std::vector<double> mean, std::vector<double> var,
                     double eps = kNormEps);
  ValueId layer_norm(ValueId x, ValueId gamma, ValueId beta, double eps = kNormEps);
  ValueId relu(ValueId x);
  ValueId gelu(ValueId x);
  /// Channel-mixing linear map at every position; weight holds (out, in) values.
  ValueId linear(ValueId x, ValueId weight, std::optional<ValueId> bias, std::int64_t out_features);
  ValueId global_avg_pool(ValueId x);
  ValueId scale(ValueId x, double factor);
  ValueId split_heads(ValueId x, std::int64_t head_dim);
  ValueId merge_heads(ValueId x, std::int64_t height, std::int64_t width);
  ValueId matmul(ValueId a, ValueId b, bool transpose_b = false);
  ValueId softmax(ValueId x);
  ValueId sum(ValueId x);
  ValueId weighted_sum(ValueId x, TensorD weights);

  /// Gradients of the scalar `output` with respect to every recorded value.
  /// Throws NotOnTape for unknown ids and ShapeMismatch for non-scalars.
  Gradients backward(ValueId output) const;

  /// Sign of every ReLU input in recording order; two evaluations with equal
  /// patterns lie in the same linear piece of every ReLU.
  std::vector<bool> relu_pattern() const;

 private:
  struct Node;
  const Node& node(ValueId id) const;
  ValueId push(Node node);

  std::vector<Node> nodes_;
};

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate.
TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, const TensorD& x, double eps = 1e-4);

struct GradReport {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  Shape worst_coordinate{};  // (n, c, h, w) of the largest relative error
  std::int64_t checked = 0;
  std::int64_t skipped = 0;  // coordinates excluded by a mask
  double tolerance = 0.0;
  bool passed = false;
};

/// Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
/// Coordinates with mask[i] == false are skipped.
GradReport compare_gradients(std::string name, const TensorD& analytic, const TensorD& numeric, double tolerance,
                             double floor = 1e-6, const std::vector<bool>* mask = nullptr);

}  // namespace nextvit
