#include "nextvit/graph.hpp"

#include <cmath>
#include <set>

#include "nextvit/rng.hpp"

namespace nextvit {

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::Input:
      return "input";
    case OpKind::Conv:
      return "conv";
    case OpKind::Norm:
      return "norm";
    case OpKind::Act:
      return "act";
    case OpKind::Add:
      return "add";
    case OpKind::Concat:
      return "concat";
    case OpKind::AvgPool:
      return "avg_pool";
    case OpKind::Linear:
      return "linear";
    case OpKind::SplitHeads:
      return "split_heads";
    case OpKind::MergeHeads:
      return "merge_heads";
    case OpKind::MatMulNT:
      return "matmul_nt";
    case OpKind::MatMulNN:
      return "matmul_nn";
    case OpKind::Scale:
      return "scale";
    case OpKind::Softmax:
      return "softmax";
    case OpKind::GlobalPool:
      return "global_pool";
  }
  return "?";
}

std::int64_t ParamDecl::numel() const noexcept { return product(dims); }

std::vector<std::int64_t> Graph::consumers(std::int64_t id) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (auto in : nodes[i].inputs) {
      if (in == id) {
        out.push_back(static_cast<std::int64_t>(i));
        break;
      }
    }
  }
  return out;
}

std::vector<ParamDecl> Graph::params() const {
  std::vector<ParamDecl> out;
  std::set<std::string, std::less<>> seen;
  for (const auto& n : nodes) {
    for (const auto& p : n.params) {
      if (seen.insert(p.name).second) out.push_back(p);
    }
  }
  return out;
}

std::int64_t Graph::count(OpKind kind) const {
  std::int64_t c = 0;
  for (const auto& n : nodes) c += n.kind == kind ? 1 : 0;
  return c;
}

GraphValue GraphExec::push(GraphNode node) {
  node.scope = current();
  if (node.path.empty()) node.path = node.scope;
  const Shape s = node.shape;
  graph_.nodes.push_back(std::move(node));
  return {s, static_cast<std::int64_t>(graph_.nodes.size()) - 1};
}

GraphValue GraphExec::input(Shape s) {
  GraphNode n;
  n.kind = OpKind::Input;
  n.shape = s;
  return push(std::move(n));
}

GraphValue GraphExec::conv2d(const Value& x, std::string_view name, const ConvGeom& g) {
  const ConvGeometry geo{x.shape.c, g.out, g.kernel, g.stride, g.padding, g.groups};
  geo.validate();
  GraphNode n;
  n.kind = OpKind::Conv;
  n.path = path(name);
  n.inputs = {x.node};
  n.shape = conv_output_shape(x.shape, geo);
  n.conv = g;
  const std::int64_t fan_in = geo.in_per_group() * g.kernel * g.kernel;
  n.params.push_back({n.path + ".weight", {g.out, geo.in_per_group(), g.kernel, g.kernel}, ParamRole::Weight, fan_in});
  if (g.bias) n.params.push_back({n.path + ".bias", {g.out}, ParamRole::Bias, 0});
  n.macs = fan_in * g.out * n.shape.spatial() * n.shape.n;
  return push(std::move(n));
}

GraphValue GraphExec::norm(const Value& x, std::string_view name, NormKind kind) {
  if (kind == NormKind::Identity) return x;
  GraphNode n;
  n.kind = OpKind::Norm;
  n.norm = kind;
  n.path = path(name);
  n.inputs = {x.node};
  n.shape = x.shape;
  const std::vector<std::int64_t> dims{x.shape.c};
  n.params.push_back({n.path + ".weight", dims, ParamRole::Gamma, 0});
  n.params.push_back({n.path + ".bias", dims, ParamRole::Beta, 0});
  if (kind == NormKind::BatchNorm) {
    n.params.push_back({n.path + ".running_mean", dims, ParamRole::RunningMean, 0});
    n.params.push_back({n.path + ".running_var", dims, ParamRole::RunningVar, 0});
  }
  return push(std::move(n));
}

GraphValue GraphExec::act(const Value& x, ActKind kind) {
  GraphNode n;
  n.kind = OpKind::Act;
  n.act = kind;
  n.inputs = {x.node};
  n.shape = x.shape;
  return push(std::move(n));
}

GraphValue GraphExec::add(const Value& a, const Value& b) {
  if (a.shape != b.shape) fail(ErrorKind::ShapeMismatch, "add " + a.shape.str() + " vs " + b.shape.str());
  GraphNode n;
  n.kind = OpKind::Add;
  n.inputs = {a.node, b.node};
  n.shape = a.shape;
  return push(std::move(n));
}

GraphValue GraphExec::concat_channels(const Value& a, const Value& b) {
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w) {
    fail(ErrorKind::ShapeMismatch, "concat " + a.shape.str() + " vs " + b.shape.str());
  }
  GraphNode n;
  n.kind = OpKind::Concat;
  n.inputs = {a.node, b.node};
  n.shape = Shape{a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w};
  return push(std::move(n));
}

GraphValue GraphExec::avg_pool(const Value& x, std::int64_t k, bool ceil_mode) {
  if (!ceil_mode && (x.shape.h < k || x.shape.w < k)) {
    fail(ErrorKind::ShapeMismatch, "pool window " + std::to_string(k) + " exceeds input " + x.shape.str());
  }
  GraphNode n;
  n.kind = OpKind::AvgPool;
  n.inputs = {x.node};
  n.shape = Shape{x.shape.n, x.shape.c, pool_out_extent(x.shape.h, k, k, ceil_mode),
                  pool_out_extent(x.shape.w, k, k, ceil_mode)};
  return push(std::move(n));
}

GraphValue GraphExec::linear(const Value& x, std::string_view name, std::int64_t out) {
  GraphNode n;
  n.kind = OpKind::Linear;
  n.path = path(name);
  n.inputs = {x.node};
  n.shape = Shape{x.shape.n, out, x.shape.h, x.shape.w};
  n.params.push_back({n.path + ".weight", {out, x.shape.c}, ParamRole::Weight, x.shape.c});
  n.params.push_back({n.path + ".bias", {out}, ParamRole::Bias, 0});
  n.macs = x.shape.c * out * x.shape.spatial() * x.shape.n;
  return push(std::move(n));
}

GraphValue GraphExec::split_heads(const Value& x, std::int64_t d) {
  if (d <= 0 || x.shape.c % d != 0) {
    fail(ErrorKind::HeadMismatch, "channels " + std::to_string(x.shape.c) + " not divisible by " + std::to_string(d));
  }
  GraphNode n;
  n.kind = OpKind::SplitHeads;
  n.inputs = {x.node};
  n.shape = Shape{x.shape.n, x.shape.c / d, x.shape.spatial(), d};
  return push(std::move(n));
}

GraphValue GraphExec::merge_heads(const Value& x, std::int64_t h, std::int64_t w) {
  if (h * w != x.shape.h) fail(ErrorKind::ShapeMismatch, "merge_heads token count mismatch " + x.shape.str());
  GraphNode n;
  n.kind = OpKind::MergeHeads;
  n.inputs = {x.node};
  n.shape = Shape{x.shape.n, x.shape.c * x.shape.w, h, w};
  return push(std::move(n));
}

GraphValue GraphExec::matmul_nt(const Value& a, const Value& b) {
  if (a.shape.n != b.shape.n || a.shape.c != b.shape.c || a.shape.w != b.shape.w) {
    fail(ErrorKind::ShapeMismatch, "matmul_nt " + a.shape.str() + " vs " + b.shape.str());
  }
  GraphNode n;
  n.kind = OpKind::MatMulNT;
  n.inputs = {a.node, b.node};
  n.shape = Shape{a.shape.n, a.shape.c, a.shape.h, b.shape.h};
  n.macs = a.shape.n * a.shape.c * a.shape.h * b.shape.h * a.shape.w;
  return push(std::move(n));
}

GraphValue GraphExec::matmul_nn(const Value& a, const Value& b) {
  if (a.shape.n != b.shape.n || a.shape.c != b.shape.c || a.shape.w != b.shape.h) {
    fail(ErrorKind::ShapeMismatch, "matmul_nn " + a.shape.str() + " vs " + b.shape.str());
  }
  GraphNode n;
  n.kind = OpKind::MatMulNN;
  n.inputs = {a.node, b.node};
  n.shape = Shape{a.shape.n, a.shape.c, a.shape.h, b.shape.w};
  n.macs = a.shape.n * a.shape.c * a.shape.h * a.shape.w * b.shape.w;
  return push(std::move(n));
}

GraphValue GraphExec::scale(const Value& x, double) {
  GraphNode n;
  n.kind = OpKind::Scale;
  n.inputs = {x.node};
  n.shape = x.shape;
  return push(std::move(n));
}

GraphValue GraphExec::softmax(const Value& x) {
  GraphNode n;
  n.kind = OpKind::Softmax;
  n.inputs = {x.node};
  n.shape = x.shape;
  return push(std::move(n));
}

GraphValue GraphExec::global_avg_pool(const Value& x) {
  GraphNode n;
  n.kind = OpKind::GlobalPool;
  n.inputs = {x.node};
  n.shape = Shape{x.shape.n, x.shape.c, 1, 1};
  return push(std::move(n));
}

Graph GraphExec::take(const Value& output) {
  graph_.output = output.node;
  Graph g = std::move(graph_);
  graph_ = Graph{};
  return g;
}

ParamSet init_from_decls(const std::vector<ParamDecl>& decls, std::uint64_t seed) {
  ParamSet out;
  for (const auto& d : decls) {
    ParamArray a(d.dims, 0.0f);
    switch (d.role) {
      case ParamRole::Weight: {
        SplitMix64 rng(seed ^ fnv1a(d.name));
        const double stddev = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(d.fan_in, 1)));
        for (auto& v : a.data) v = static_cast<float>(rng.normal() * stddev);
        break;
      }
      case ParamRole::Gamma:
      case ParamRole::RunningVar:
        std::fill(a.data.begin(), a.data.end(), 1.0f);
        break;
      case ParamRole::Bias:
      case ParamRole::Beta:
      case ParamRole::RunningMean:
        break;
    }
    out.insert(d.name, std::move(a));
  }
  return out;
}

void validate_params(const std::vector<ParamDecl>& decls, const ParamSet& params) {
  std::set<std::string, std::less<>> declared;
  for (const auto& d : decls) {
    declared.insert(d.name);
    checked_param(params, d.name, d.dims);
  }
  for (const auto& [name, array] : params) {
    if (!declared.contains(name)) fail(ErrorKind::SignatureMismatch, "unexpected param " + name);
  }
}

namespace {

template <typename Spec, typename F>
std::vector<ParamDecl> trace_block(const Spec& spec, std::int64_t in_channels, F&& body) {
  GraphExec ex;
  auto x = ex.input(Shape{1, in_channels, 8, 8});
  auto y = body(ex, x, spec);
  return ex.take(y).params();
}

}  // namespace

std::vector<ParamDecl> block_params(const NCBSpec& spec) {
  return trace_block(spec, spec.in_channels, [](GraphExec& ex, GraphValue x, const NCBSpec& s) { return ncb(ex, x, s); });
}

std::vector<ParamDecl> block_params(const NTBSpec& spec) {
  return trace_block(spec, spec.in_channels, [](GraphExec& ex, GraphValue x, const NTBSpec& s) { return ntb(ex, x, s); });
}

std::vector<ParamDecl> block_params(const MHCASpec& spec) {
  return trace_block(spec, spec.channels, [](GraphExec& ex, GraphValue x, const MHCASpec& s) { return mhca(ex, x, s); });
}

std::vector<ParamDecl> block_params(const EMHSASpec& spec) {
  return trace_block(spec, spec.channels,
                     [](GraphExec& ex, GraphValue x, const EMHSASpec& s) { return emhsa(ex, x, s); });
}

}  // namespace nextvit
