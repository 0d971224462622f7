#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nextvit/blocks.hpp"
#include "nextvit/nn_ops.hpp"
#include "nextvit/param_set.hpp"
#include "nextvit/tape.hpp"

namespace nextvit {

/// Receives scope boundaries in execution order; paths are dotted.
class ScopeObserver {
 public:
  virtual ~ScopeObserver() = default;
  virtual void enter(const std::string& path) = 0;
  virtual void exit(const std::string& path) = 0;
};

/// Dotted name stack shared by all executors.
class ScopeStack {
 public:
  class Guard {
   public:
    explicit Guard(ScopeStack* owner) : owner_(owner) {}
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
    ~Guard() { owner_->pop(); }

   private:
    ScopeStack* owner_;
  };

  [[nodiscard]] Guard scope(std::string_view name);
  std::string current() const;
  /// current() + "." + leaf; an empty leaf names the scope itself.
  std::string path(std::string_view leaf) const;
  void set_observer(ScopeObserver* observer) noexcept { observer_ = observer; }

 private:
  void pop();

  std::vector<std::string> parts_;
  ScopeObserver* observer_ = nullptr;
};

/// Evaluates blocks directly on tensors, reading parameters by name.
template <typename T>
class EagerExec : public ScopeStack {
 public:
  using Value = BasicTensor<T>;

  explicit EagerExec(const ParamSet& params, ConvAlgo algo = default_conv_algo()) : params_(params), algo_(algo) {}

  Shape shape(const Value& v) const { return v.shape(); }
  Value conv2d(const Value& x, std::string_view name, const ConvGeom& g);
  Value norm(const Value& x, std::string_view name, NormKind kind);
  Value act(const Value& x, ActKind kind) const;
  Value add(const Value& a, const Value& b) const { return nextvit::add(a, b); }
  Value concat_channels(const Value& a, const Value& b) const { return nextvit::concat_channels(a, b); }
  Value avg_pool(const Value& x, std::int64_t k, bool ceil_mode) const {
    return avg_pool2d(x, k, k, ceil_mode);
  }
  Value linear(const Value& x, std::string_view name, std::int64_t out);
  Value split_heads(const Value& x, std::int64_t d) const { return nextvit::split_heads(x, d); }
  Value merge_heads(const Value& x, std::int64_t h, std::int64_t w) const { return nextvit::merge_heads(x, h, w); }
  Value matmul_nt(const Value& a, const Value& b) const { return batched_matmul(a, b, true); }
  Value matmul_nn(const Value& a, const Value& b) const { return batched_matmul(a, b, false); }
  Value scale(const Value& x, double f) const { return nextvit::scale(x, static_cast<T>(f)); }
  Value softmax(const Value& x) const { return softmax_last(x); }
  /// (n, c, 1, 1).
  Value global_avg_pool(const Value& x) const;

 private:
  std::span<const T> param(const std::string& name, const std::vector<std::int64_t>& dims);

  const ParamSet& params_;
  ConvAlgo algo_;
  std::map<std::string, std::vector<T>, std::less<>> converted_;
};

extern template class EagerExec<float>;
extern template class EagerExec<double>;

/// Records blocks on a double-precision tape. Parameters become leaves on
/// first use and are reused for repeated names.
class TapeExec : public ScopeStack {
 public:
  using Value = ValueId;

  TapeExec(Tape& tape, const ParamSet& params) : tape_(tape), params_(params) {}

  Shape shape(Value v) const { return tape_.value(v).shape(); }
  Value conv2d(Value x, std::string_view name, const ConvGeom& g);
  Value norm(Value x, std::string_view name, NormKind kind);
  Value act(Value x, ActKind kind);
  Value add(Value a, Value b) { return tape_.add(a, b); }
  Value concat_channels(Value a, Value b) { return tape_.concat_channels(a, b); }
  Value avg_pool(Value x, std::int64_t k, bool ceil_mode) { return tape_.avg_pool2d(x, k, k, ceil_mode); }
  Value linear(Value x, std::string_view name, std::int64_t out);
  Value split_heads(Value x, std::int64_t d) { return tape_.split_heads(x, d); }
  Value merge_heads(Value x, std::int64_t h, std::int64_t w) { return tape_.merge_heads(x, h, w); }
  Value matmul_nt(Value a, Value b) { return tape_.matmul(a, b, true); }
  Value matmul_nn(Value a, Value b) { return tape_.matmul(a, b, false); }
  Value scale(Value x, double f) { return tape_.scale(x, f); }
  Value softmax(Value x) { return tape_.softmax(x); }
  Value global_avg_pool(Value x) { return tape_.global_avg_pool(x); }

  /// Full parameter name to leaf id for every learnable array used so far.
  const std::map<std::string, ValueId>& leaves() const noexcept { return leaves_; }

  /// Uses `value` (same element count) instead of the stored array.
  void override_param(const std::string& name, TensorD value) { overrides_.insert_or_assign(name, std::move(value)); }

 private:
  ValueId leaf(const std::string& name, const std::vector<std::int64_t>& dims);
  std::vector<double> constant(const std::string& name, std::int64_t count) const;

  Tape& tape_;
  const ParamSet& params_;
  std::map<std::string, ValueId> leaves_;
  std::map<std::string, TensorD> overrides_;
};

/// Throws MissingParam when absent and ShapeMismatch when dims differ.
const ParamArray& checked_param(const ParamSet& params, const std::string& name,
                                const std::vector<std::int64_t>& dims);

}  // namespace nextvit
