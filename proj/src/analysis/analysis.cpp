#include "nextvit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace nextvit {

std::string module_of(const std::string& path) {
  auto parts_until = [&](int n) {
    std::size_t pos = 0;
    for (int i = 0; i < n; ++i) {
      pos = path.find('.', pos);
      if (pos == std::string::npos) return path;
      ++pos;
    }
    return path.substr(0, pos - 1);
  };
  if (path.rfind("stages.", 0) == 0) {
    const std::string three = parts_until(3);
    if (three.size() >= 6 && three.compare(three.size() - 6, 6, ".embed") == 0) return three;
    return parts_until(4);
  }
  return parts_until(1);
}

CostReport count_costs(const ModelSpec& spec, std::int64_t height, std::int64_t width) {
  const Graph g = trace_graph(spec, height, width);
  CostReport r;
  std::map<std::string, std::size_t> index;
  auto entry = [&](const std::string& path) -> CostEntry& {
    const std::string m = module_of(path);
    auto [it, inserted] = index.emplace(m, r.modules.size());
    if (inserted) r.modules.push_back({m, 0, 0});
    return r.modules[it->second];
  };
  for (const auto& n : g.nodes) {
    if (n.kind == OpKind::Input) continue;
    std::int64_t p = 0;
    for (const auto& d : n.params) p += d.learnable() ? d.numel() : 0;
    if (p == 0 && n.macs == 0) continue;
    CostEntry& e = entry(n.path);
    e.params += p;
    e.flops += n.macs;
    r.params_total += p;
    r.flops_total += n.macs;
  }
  return r;
}

CostReport count_params(const ModelSpec& spec) {
  const std::int64_t s = spec.reduction();
  CostReport r = count_costs(spec, s, s);
  r.flops_total = 0;
  for (auto& e : r.modules) e.flops = 0;
  return r;
}

CostReport count_flops(const ModelSpec& spec, std::int64_t height, std::int64_t width) {
  return count_costs(spec, height, width);
}

namespace {

struct BnAffine {
  std::vector<double> a;      // gamma / sqrt(var + eps)
  std::vector<double> shift;  // beta - mean * a
};

BnAffine bn_affine(const ParamSet& params, const std::string& path, std::int64_t c) {
  const std::vector<std::int64_t> dims{c};
  const auto& gamma = checked_param(params, path + ".weight", dims).data;
  const auto& beta = checked_param(params, path + ".bias", dims).data;
  const auto& mean = checked_param(params, path + ".running_mean", dims).data;
  const auto& var = checked_param(params, path + ".running_var", dims).data;
  BnAffine out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(c); ++i) {
    const double a = static_cast<double>(gamma[i]) / std::sqrt(static_cast<double>(var[i]) + kNormEps);
    out.a.push_back(a);
    out.shift.push_back(static_cast<double>(beta[i]) - static_cast<double>(mean[i]) * a);
  }
  return out;
}

// W[o, ...] *= a_o; b_o = b_o * a_o + shift_o.
void fold_into_output(ParamSet& params, const std::string& path, std::int64_t out, const BnAffine& bn) {
  ParamArray& w = params.at(path + ".weight");
  const std::int64_t per_out = w.numel() / out;
  std::vector<double> bias(static_cast<std::size_t>(out), 0.0);
  if (const ParamArray* b = params.find(path + ".bias")) {
    for (std::size_t o = 0; o < bias.size(); ++o) bias[o] = b->data[o];
  }
  for (std::int64_t o = 0; o < out; ++o) {
    const double a = bn.a[static_cast<std::size_t>(o)];
    for (std::int64_t i = 0; i < per_out; ++i) {
      auto& v = w.data[static_cast<std::size_t>(o * per_out + i)];
      v = static_cast<float>(static_cast<double>(v) * a);
    }
  }
  std::vector<float> folded(bias.size());
  for (std::size_t o = 0; o < bias.size(); ++o) folded[o] = static_cast<float>(bias[o] * bn.a[o] + bn.shift[o]);
  params.insert_or_assign(path + ".bias", ParamArray({out}, std::move(folded)));
}

// Linear y = W (a x + shift) + b: W[o, i] *= a_i; b_o += sum_i W[o, i] shift_i.
void fold_into_input(ParamSet& params, const std::string& path, std::int64_t out, std::int64_t in,
                     const BnAffine& bn) {
  checked_param(params, path + ".weight", {out, in});
  ParamArray& w = params.at(path + ".weight");
  ParamArray& b = params.at(path + ".bias");
  for (std::int64_t o = 0; o < out; ++o) {
    double acc = b.data[static_cast<std::size_t>(o)];
    for (std::int64_t i = 0; i < in; ++i) {
      auto& v = w.data[static_cast<std::size_t>(o * in + i)];
      acc += static_cast<double>(v) * bn.shift[static_cast<std::size_t>(i)];
      v = static_cast<float>(static_cast<double>(v) * bn.a[static_cast<std::size_t>(i)]);
    }
    b.data[static_cast<std::size_t>(o)] = static_cast<float>(acc);
  }
}

}  // namespace

FoldResult fold_batchnorm(const ModelSpec& spec, const ParamSet& params) {
  const std::int64_t r = spec.reduction();
  const Graph g = trace_graph(spec, r, r);
  validate_params(g.params(), params);
  FoldResult out{spec, params};
  out.spec.norm = NormKind::Identity;
  for (std::size_t id = 0; id < g.nodes.size(); ++id) {
    const GraphNode& n = g.nodes[id];
    if (n.kind != OpKind::Norm) continue;
    if (n.norm != NormKind::BatchNorm) {
      fail(ErrorKind::NotFoldable, n.path + ": " + to_string(n.norm) + " norm has no running statistics to fold");
    }
    const BnAffine bn = bn_affine(params, n.path, n.shape.c);
    const GraphNode& producer = g.nodes[static_cast<std::size_t>(n.inputs[0])];
    const auto producer_uses = g.consumers(n.inputs[0]);
    const bool post = (producer.kind == OpKind::Conv || producer.kind == OpKind::Linear) &&
                      producer_uses.size() == 1;
    if (post) {
      fold_into_output(out.params, producer.path, producer.shape.c, bn);
    } else {
      const auto uses = g.consumers(static_cast<std::int64_t>(id));
      const bool all_linear = !uses.empty() && std::all_of(uses.begin(), uses.end(), [&](std::int64_t u) {
        return g.nodes[static_cast<std::size_t>(u)].kind == OpKind::Linear;
      });
      if (!all_linear) {
        fail(ErrorKind::NotFoldable, n.path + ": batch norm is neither after a conv/linear nor before linears only");
      }
      for (auto u : uses) {
        const GraphNode& lin = g.nodes[static_cast<std::size_t>(u)];
        fold_into_input(out.params, lin.path, lin.shape.c, n.shape.c, bn);
      }
    }
    for (const char* leaf : {".weight", ".bias", ".running_mean", ".running_var"}) out.params.erase(n.path + leaf);
  }
  validate_params(model_params(out.spec), out.params);
  return out;
}

namespace {

class CalibExec : public EagerExec<float> {
 public:
  explicit CalibExec(ParamSet& params) : EagerExec<float>(params), params_(params) {}

  Value norm(const Value& x, std::string_view name, NormKind kind) {
    if (kind == NormKind::BatchNorm) {
      const Shape& s = x.shape();
      const std::string base = path(name);
      checked_param(params_, base + ".running_mean", {s.c});
      checked_param(params_, base + ".running_var", {s.c});
      ParamArray& m = params_.at(base + ".running_mean");
      ParamArray& v = params_.at(base + ".running_var");
      const double count = static_cast<double>(s.n * s.spatial());
      for (std::int64_t c = 0; c < s.c; ++c) {
        double sum = 0.0;
        double sq = 0.0;
        for (std::int64_t b = 0; b < s.n; ++b) {
          for (float val : x.plane(b, c)) {
            sum += val;
            sq += static_cast<double>(val) * val;
          }
        }
        const double mu = sum / count;
        m.data[static_cast<std::size_t>(c)] = static_cast<float>(mu);
        v.data[static_cast<std::size_t>(c)] = static_cast<float>(std::max(sq / count - mu * mu, 0.0));
      }
    }
    return EagerExec<float>::norm(x, name, kind);
  }

 private:
  ParamSet& params_;
};

}  // namespace

void calibrate_batchnorm(const ModelSpec& spec, ParamSet& params, const Tensor& batch) {
  check_input(spec, batch.shape());
  CalibExec ex(params);
  (void)model_forward(ex, spec, batch);
}

void randomize_norm_affine(ParamSet& params, std::uint64_t seed) {
  std::vector<std::string> norms;
  for (const auto& [name, array] : params) {
    const auto dot = name.rfind('.');
    if (dot == std::string::npos) continue;
    const std::string base = name.substr(0, dot);
    const bool is_norm = base.find("norm") != std::string::npos;
    if (is_norm && name.compare(dot, std::string::npos, ".weight") == 0) norms.push_back(base);
  }
  for (const auto& base : norms) {
    SplitMix64 rng(seed ^ fnv1a(base));
    for (auto& v : params.at(base + ".weight").data) v = static_cast<float>(rng.uniform(0.5, 1.5));
    for (auto& v : params.at(base + ".bias").data) v = static_cast<float>(0.1 * rng.normal());
  }
}

bool EquivReport::all_argmax() const {
  return std::all_of(argmax_match.begin(), argmax_match.end(), [](bool b) { return b; });
}

namespace {

template <typename T>
void accumulate_sample(EquivReport& r, std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) fail(ErrorKind::SignatureMismatch, "outputs differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    const double denom = std::max({std::abs(static_cast<double>(a[i])), std::abs(static_cast<double>(b[i])), 1e-6});
    r.max_abs_err = std::max(r.max_abs_err, d);
    r.max_rel_err = std::max(r.max_rel_err, d / denom);
  }
  const auto ia = std::max_element(a.begin(), a.end()) - a.begin();
  const auto ib = std::max_element(b.begin(), b.end()) - b.begin();
  r.argmax_match.push_back(ia == ib);
  ++r.samples;
}

}  // namespace

EquivReport check_equivalence(const ModelSpec& spec_a, const ParamSet& params_a, const ModelSpec& spec_b,
                              const ParamSet& params_b, std::int64_t n_samples, std::uint64_t seed, double tol,
                              std::int64_t height, std::int64_t width) {
  if (spec_a.in_channels != spec_b.in_channels || spec_a.num_classes != spec_b.num_classes ||
      spec_a.reduction() != spec_b.reduction()) {
    fail(ErrorKind::SignatureMismatch, "models differ in input channels, classes or reduction");
  }
  EquivReport r;
  r.tolerance = tol;
  SplitMix64 rng(seed);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const Tensor x = random_normal<float>(Shape{1, spec_a.in_channels, height, width}, rng);
    const Matrix ya = forward(spec_a, params_a, x);
    const Matrix yb = forward(spec_b, params_b, x);
    accumulate_sample<float>(r, ya.data(), yb.data());
  }
  r.passed = r.samples > 0 && r.max_abs_err < tol && r.all_argmax();
  return r;
}

template <typename T>
EquivReport check_equivalence(const TensorFn<T>& a, const TensorFn<T>& b, Shape input, std::int64_t n_samples,
                              std::uint64_t seed, double tol) {
  EquivReport r;
  r.tolerance = tol;
  SplitMix64 rng(seed);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const BasicTensor<T> x = random_normal<T>(input, rng);
    const BasicTensor<T> ya = a(x);
    const BasicTensor<T> yb = b(x);
    if (ya.shape() != yb.shape()) {
      fail(ErrorKind::SignatureMismatch, "outputs " + ya.shape().str() + " vs " + yb.shape().str());
    }
    accumulate_sample<T>(r, ya.data(), yb.data());
  }
  r.passed = r.samples > 0 && r.max_abs_err < tol && r.all_argmax();
  return r;
}

template EquivReport check_equivalence<float>(const TensorFn<float>&, const TensorFn<float>&, Shape, std::int64_t,
                                              std::uint64_t, double);
template EquivReport check_equivalence<double>(const TensorFn<double>&, const TensorFn<double>&, Shape,
                                               std::int64_t, std::uint64_t, double);

std::string format_report(const EquivReport& r) {
  std::ostringstream os;
  std::int64_t matches = 0;
  for (bool b : r.argmax_match) matches += b ? 1 : 0;
  os << "samples=" << r.samples << " max_abs_err=" << r.max_abs_err << " max_rel_err=" << r.max_rel_err
     << " argmax_match=" << matches << "/" << r.samples << " tol=" << r.tolerance
     << (r.passed ? " PASS" : " FAIL");
  return os.str();
}

}  // namespace nextvit
