#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nextvit/blocks.hpp"
#include "nextvit/exec.hpp"

namespace nextvit {

enum class OpKind {
  Input,
  Conv,
  Norm,
  Act,
  Add,
  Concat,
  AvgPool,
  Linear,
  SplitHeads,
  MergeHeads,
  MatMulNT,
  MatMulNN,
  Scale,
  Softmax,
  GlobalPool,
};

std::string to_string(OpKind k);

enum class ParamRole { Weight, Bias, Gamma, Beta, RunningMean, RunningVar };

struct ParamDecl {
  std::string name;
  std::vector<std::int64_t> dims;
  ParamRole role = ParamRole::Weight;
  std::int64_t fan_in = 0;  // weights only

  bool learnable() const noexcept { return role != ParamRole::RunningMean && role != ParamRole::RunningVar; }
  std::int64_t numel() const noexcept;
};

struct GraphNode {
  OpKind kind = OpKind::Input;
  std::string scope;  // enclosing scope path
  std::string path;   // scope + leaf name for parameterised ops, scope otherwise
  std::vector<std::int64_t> inputs;
  Shape shape{};
  std::vector<ParamDecl> params;
  std::int64_t macs = 0;
  ConvGeom conv{};  // Conv only
  NormKind norm = NormKind::BatchNorm;
  ActKind act = ActKind::ReLU;
};

struct Graph {
  std::vector<GraphNode> nodes;
  std::int64_t output = -1;

  /// Ids of nodes reading node `id`.
  std::vector<std::int64_t> consumers(std::int64_t id) const;
  std::vector<ParamDecl> params() const;
  std::int64_t count(OpKind kind) const;
};

struct GraphValue {
  Shape shape{};
  std::int64_t node = -1;
};

/// Shape-only executor: records every op with its parameters and MAC count
/// without touching data.
class GraphExec : public ScopeStack {
 public:
  using Value = GraphValue;

  Value input(Shape s);
  Shape shape(const Value& v) const { return v.shape; }
  Value conv2d(const Value& x, std::string_view name, const ConvGeom& g);
  Value norm(const Value& x, std::string_view name, NormKind kind);
  Value act(const Value& x, ActKind kind);
  Value add(const Value& a, const Value& b);
  Value concat_channels(const Value& a, const Value& b);
  Value avg_pool(const Value& x, std::int64_t k, bool ceil_mode);
  Value linear(const Value& x, std::string_view name, std::int64_t out);
  Value split_heads(const Value& x, std::int64_t d);
  Value merge_heads(const Value& x, std::int64_t h, std::int64_t w);
  Value matmul_nt(const Value& a, const Value& b);
  Value matmul_nn(const Value& a, const Value& b);
  Value scale(const Value& x, double f);
  Value softmax(const Value& x);
  Value global_avg_pool(const Value& x);

  const Graph& graph() const noexcept { return graph_; }
  Graph take(const Value& output);

 private:
  Value push(GraphNode node);

  Graph graph_;
};

/// Deterministic initialisation from declarations: weights ~ N(0, 1/fan_in),
/// biases and beta 0, gamma 1, running mean 0, running var 1. Every array
/// draws from its own stream seeded by seed ^ fnv1a(name).
ParamSet init_from_decls(const std::vector<ParamDecl>& decls, std::uint64_t seed);

/// Checks that `params` holds exactly the declared arrays with matching dims.
void validate_params(const std::vector<ParamDecl>& decls, const ParamSet& params);

/// Parameter declarations of a single block, e.g. for standalone tests.
std::vector<ParamDecl> block_params(const NCBSpec& spec);
std::vector<ParamDecl> block_params(const NTBSpec& spec);
std::vector<ParamDecl> block_params(const MHCASpec& spec);
std::vector<ParamDecl> block_params(const EMHSASpec& spec);

}  // namespace nextvit
