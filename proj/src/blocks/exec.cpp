#include "nextvit/exec.hpp"

namespace nextvit {

ScopeStack::Guard ScopeStack::scope(std::string_view name) {
  parts_.emplace_back(name);
  if (observer_) observer_->enter(current());
  return Guard(this);
}

void ScopeStack::pop() {
  if (observer_) observer_->exit(current());
  parts_.pop_back();
}

std::string ScopeStack::current() const {
  std::string out;
  for (const auto& p : parts_) {
    if (!out.empty()) out += '.';
    out += p;
  }
  return out;
}

std::string ScopeStack::path(std::string_view leaf) const {
  std::string out = current();
  if (leaf.empty()) return out;
  if (!out.empty()) out += '.';
  out += leaf;
  return out;
}

const ParamArray& checked_param(const ParamSet& params, const std::string& name,
                                const std::vector<std::int64_t>& dims) {
  const ParamArray& p = params.at(name);
  if (p.dims != dims) {
    fail(ErrorKind::ShapeMismatch, "param " + name + " has dims " + dims_str(p.dims) + ", expected " +
                                       dims_str(dims));
  }
  return p;
}

template <typename T>
std::span<const T> EagerExec<T>::param(const std::string& name, const std::vector<std::int64_t>& dims) {
  const ParamArray& p = checked_param(params_, name, dims);
  if constexpr (std::is_same_v<T, float>) {
    return p.data;
  } else {
    auto it = converted_.find(name);
    if (it == converted_.end()) {
      it = converted_.emplace(name, std::vector<T>(p.data.begin(), p.data.end())).first;
    }
    return it->second;
  }
}

template <typename T>
typename EagerExec<T>::Value EagerExec<T>::conv2d(const Value& x, std::string_view name, const ConvGeom& g) {
  const ConvGeometry geo{x.shape().c, g.out, g.kernel, g.stride, g.padding, g.groups};
  geo.validate();
  const std::string base = path(name);
  auto w = param(base + ".weight", {g.out, geo.in_per_group(), g.kernel, g.kernel});
  std::span<const T> b;
  if (g.bias) b = param(base + ".bias", {g.out});
  return nextvit::conv2d<T>(x, w, b, geo, algo_);
}

template <typename T>
typename EagerExec<T>::Value EagerExec<T>::norm(const Value& x, std::string_view name, NormKind kind) {
  if (kind == NormKind::Identity) return x;
  const std::string base = path(name);
  const std::vector<std::int64_t> dims{x.shape().c};
  auto gamma = param(base + ".weight", dims);
  auto beta = param(base + ".bias", dims);
  if (kind == NormKind::LayerNorm) return layer_norm<T>(x, gamma, beta);
  auto mean = param(base + ".running_mean", dims);
  auto var = param(base + ".running_var", dims);
  return batch_norm_infer<T>(x, gamma, beta, mean, var);
}

template <typename T>
typename EagerExec<T>::Value EagerExec<T>::act(const Value& x, ActKind kind) const {
  return kind == ActKind::ReLU ? relu(x) : gelu(x);
}

template <typename T>
typename EagerExec<T>::Value EagerExec<T>::linear(const Value& x, std::string_view name, std::int64_t out) {
  const std::string base = path(name);
  auto w = param(base + ".weight", {out, x.shape().c});
  auto b = param(base + ".bias", {out});
  return pointwise_linear<T>(x, w, b, out);
}

template <typename T>
typename EagerExec<T>::Value EagerExec<T>::global_avg_pool(const Value& x) const {
  const auto m = nextvit::global_avg_pool(x);
  return Value(Shape{m.rows(), m.cols(), 1, 1}, std::vector<T>(m.data().begin(), m.data().end()));
}

template class EagerExec<float>;
template class EagerExec<double>;

ValueId TapeExec::leaf(const std::string& name, const std::vector<std::int64_t>& dims) {
  if (auto it = leaves_.find(name); it != leaves_.end()) return it->second;
  const ParamArray& p = checked_param(params_, name, dims);
  Shape s{1, 1, 1, 1};
  if (dims.size() >= 1) s.n = dims[0];
  if (dims.size() >= 2) s.c = dims[1];
  if (dims.size() >= 3) s.h = dims[2];
  if (dims.size() >= 4) s.w = dims[3];
  TensorD value(s, std::vector<double>(p.data.begin(), p.data.end()));
  if (auto it = overrides_.find(name); it != overrides_.end()) {
    if (it->second.size() != value.size()) fail(ErrorKind::ShapeMismatch, "override for " + name + " has wrong size");
    value = it->second.reshaped(s);
  }
  const ValueId id = tape_.leaf(std::move(value));
  leaves_.emplace(name, id);
  return id;
}

std::vector<double> TapeExec::constant(const std::string& name, std::int64_t count) const {
  const ParamArray& p = checked_param(params_, name, {count});
  return std::vector<double>(p.data.begin(), p.data.end());
}

ValueId TapeExec::conv2d(ValueId x, std::string_view name, const ConvGeom& g) {
  const ConvGeometry geo{shape(x).c, g.out, g.kernel, g.stride, g.padding, g.groups};
  geo.validate();
  const std::string base = path(name);
  const ValueId w = leaf(base + ".weight", {g.out, geo.in_per_group(), g.kernel, g.kernel});
  std::optional<ValueId> b;
  if (g.bias) b = leaf(base + ".bias", {g.out});
  return tape_.conv2d(x, w, b, geo);
}

ValueId TapeExec::norm(ValueId x, std::string_view name, NormKind kind) {
  if (kind == NormKind::Identity) return x;
  const std::string base = path(name);
  const std::int64_t c = shape(x).c;
  const ValueId gamma = leaf(base + ".weight", {c});
  const ValueId beta = leaf(base + ".bias", {c});
  if (kind == NormKind::LayerNorm) return tape_.layer_norm(x, gamma, beta);
  return tape_.batch_norm(x, gamma, beta, constant(base + ".running_mean", c), constant(base + ".running_var", c));
}

ValueId TapeExec::act(ValueId x, ActKind kind) { return kind == ActKind::ReLU ? tape_.relu(x) : tape_.gelu(x); }

ValueId TapeExec::linear(ValueId x, std::string_view name, std::int64_t out) {
  const std::string base = path(name);
  const ValueId w = leaf(base + ".weight", {out, shape(x).c});
  const ValueId b = leaf(base + ".bias", {out});
  return tape_.linear(x, w, b, out);
}

}  // namespace nextvit
