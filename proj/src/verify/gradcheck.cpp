#include <algorithm>
#include <memory>
#include <sstream>

#include "nextvit/exec.hpp"
#include "nextvit/verify.hpp"

namespace nextvit::verify {

namespace {

Shape dims_to_shape(const std::vector<std::int64_t>& dims) {
  Shape s{1, 1, 1, 1};
  if (dims.size() >= 1) s.n = dims[0];
  if (dims.size() >= 2) s.c = dims[1];
  if (dims.size() >= 3) s.h = dims[2];
  if (dims.size() >= 4) s.w = dims[3];
  return s;
}

struct Probe {
  double loss = 0.0;
  std::vector<bool> pattern;
};

Probe evaluate(const GradCase& c, const std::vector<TensorD>& inputs, const TensorD& projection) {
  Tape tape;
  const auto [out, ids] = c.build(tape, inputs);
  const ValueId loss = tape.weighted_sum(out, projection);
  return {tape.value(loss)[0], c.kink_aware ? tape.relu_pattern() : std::vector<bool>{}};
}

std::vector<std::int64_t> pick_coords(std::int64_t numel, std::int64_t max_coords) {
  std::vector<std::int64_t> idx;
  if (max_coords < 0 || numel <= max_coords) {
    for (std::int64_t i = 0; i < numel; ++i) idx.push_back(i);
    return idx;
  }
  for (std::int64_t j = 0; j < max_coords; ++j) idx.push_back(j * numel / max_coords);
  return idx;
}

using Build = std::function<ValueId(Tape&, const std::vector<ValueId>&)>;

GradCase op_case(std::string name, std::vector<std::pair<std::string, TensorD>> inputs, Build fn,
                 bool kink_aware = false) {
  GradCase c;
  c.name = std::move(name);
  for (auto& [n, t] : inputs) {
    c.input_names.push_back(n);
    c.inputs.push_back(std::move(t));
  }
  c.build = [fn](Tape& tape, const std::vector<TensorD>& values) {
    std::vector<ValueId> ids;
    for (const auto& v : values) ids.push_back(tape.leaf(v));
    return std::pair{fn(tape, ids), ids};
  };
  c.kink_aware = kink_aware;
  return c;
}

using BlockFn = std::function<ValueId(TapeExec&, ValueId)>;

GradCase block_case(std::string name, const std::vector<ParamDecl>& decls, Shape in, BlockFn fn, bool kink_aware,
                    std::uint64_t seed) {
  auto params = std::make_shared<ParamSet>(random_params(decls, seed));
  SplitMix64 rng(seed ^ 0xA5A5A5A5ULL);
  GradCase c;
  c.name = std::move(name);
  c.input_names.push_back("x");
  c.inputs.push_back(random_normal<double>(in, rng));
  for (const auto& d : decls) {
    if (!d.learnable()) continue;
    const auto& data = params->at(d.name).data;
    c.input_names.push_back(d.name);
    c.inputs.emplace_back(dims_to_shape(d.dims), std::vector<double>(data.begin(), data.end()));
  }
  const std::vector<std::string> names = c.input_names;
  c.build = [params, names, fn](Tape& tape, const std::vector<TensorD>& values) {
    TapeExec ex(tape, *params);
    for (std::size_t i = 1; i < values.size(); ++i) ex.override_param(names[i], values[i]);
    const ValueId x = tape.leaf(values[0]);
    const ValueId y = fn(ex, x);
    std::vector<ValueId> ids{x};
    for (std::size_t i = 1; i < names.size(); ++i) {
      auto it = ex.leaves().find(names[i]);
      if (it == ex.leaves().end()) fail(ErrorKind::MissingParam, names[i] + " was never used");
      ids.push_back(it->second);
    }
    return std::pair{y, ids};
  };
  c.kink_aware = kink_aware;
  c.max_coords = -1;
  return c;
}

}  // namespace

std::vector<GradReport> run_grad_case(const GradCase& c, std::uint64_t seed, double eps, double tol) {
  Tape tape;
  const auto [out, ids] = c.build(tape, c.inputs);
  SplitMix64 rng(seed);
  const TensorD projection = random_normal<double>(tape.value(out).shape(), rng);
  const ValueId loss = tape.weighted_sum(out, projection);
  const Gradients grads = tape.backward(loss);
  const std::vector<bool> base = c.kink_aware ? tape.relu_pattern() : std::vector<bool>{};

  std::vector<GradReport> reports;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const TensorD& analytic = grads[ids[i]];
    // Parameters beyond the input are subsampled; the input is always checked in full.
    const std::int64_t limit = i == 0 ? c.max_coords : (c.max_coords < 0 ? 48 : c.max_coords);
    const auto coords = pick_coords(c.inputs[i].size(), limit);
    const auto k = static_cast<std::int64_t>(coords.size());
    TensorD a(Shape{1, 1, 1, k});
    TensorD n(Shape{1, 1, 1, k});
    std::vector<bool> mask(coords.size(), true);
    std::vector<TensorD> probe = c.inputs;
    for (std::size_t j = 0; j < coords.size(); ++j) {
      const std::int64_t idx = coords[j];
      const double orig = c.inputs[i][idx];
      probe[i][idx] = orig + eps;
      const Probe up = evaluate(c, probe, projection);
      probe[i][idx] = orig - eps;
      const Probe down = evaluate(c, probe, projection);
      probe[i][idx] = orig;
      a[static_cast<std::int64_t>(j)] = analytic[idx];
      n[static_cast<std::int64_t>(j)] = (up.loss - down.loss) / (2.0 * eps);
      if (c.kink_aware) mask[j] = up.pattern == base && down.pattern == base;
    }
    std::string name = c.name + " d/d " + c.input_names[i];
    if (k < c.inputs[i].size()) name += " (" + std::to_string(k) + "/" + std::to_string(c.inputs[i].size()) + " coords)";
    reports.push_back(compare_gradients(name, a, n, tol, 1e-6, c.kink_aware ? &mask : nullptr));
  }
  return reports;
}

std::string format(const GradReport& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS " : "FAIL ") << r.name << ": max_rel_err=" << r.max_rel_err
     << " max_abs_err=" << r.max_abs_err << " checked=" << r.checked;
  if (r.skipped > 0) os << " skipped_at_relu_kinks=" << r.skipped;
  if (!r.passed) os << " worst=" << r.worst_coordinate;
  return os.str();
}

std::vector<GradReport> run_gradcheck(std::int64_t max_size, std::uint64_t seed) {
  if (max_size < 2) fail(ErrorKind::InvalidArgument, "gradcheck size must be >= 2");
  const std::int64_t s = std::min<std::int64_t>(8, max_size);
  SplitMix64 rng(seed);
  auto rnd = [&](Shape sh) { return random_normal<double>(sh, rng); };
  auto pos = [&](Shape sh) { return random_uniform<double>(sh, rng, 0.5, 1.5); };

  std::vector<GradCase> cases;
  cases.push_back(op_case("add", {{"a", rnd({1, 8, s, s})}, {"b", rnd({1, 8, s, s})}},
                          [](Tape& t, auto& v) { return t.add(v[0], v[1]); }));
  cases.push_back(op_case("concat_channels", {{"a", rnd({1, 3, s, s})}, {"b", rnd({1, 5, s, s})}},
                          [](Tape& t, auto& v) { return t.concat_channels(v[0], v[1]); }));
  cases.push_back(op_case("slice_channels", {{"x", rnd({1, 8, s, s})}},
                          [](Tape& t, auto& v) { return t.slice_channels(v[0], 2, 6); }));
  cases.push_back(op_case("conv2d 3x3 groups=2 bias",
                          {{"x", rnd({1, 8, s, s})}, {"w", rnd({8, 4, 3, 3})}, {"b", rnd({8, 1, 1, 1})}},
                          [](Tape& t, auto& v) { return t.conv2d(v[0], v[1], v[2], ConvGeometry{8, 8, 3, 1, 1, 2}); }));
  cases.push_back(op_case("conv2d 3x3 stride=2", {{"x", rnd({1, 4, s, s})}, {"w", rnd({6, 4, 3, 3})}},
                          [](Tape& t, auto& v) {
                            return t.conv2d(v[0], v[1], std::nullopt, ConvGeometry{4, 6, 3, 2, 1, 1});
                          }));
  cases.push_back(op_case("conv2d 1x1", {{"x", rnd({1, 8, s, s})}, {"w", rnd({4, 8, 1, 1})}, {"b", rnd({4, 1, 1, 1})}},
                          [](Tape& t, auto& v) { return t.conv2d(v[0], v[1], v[2], ConvGeometry{8, 4, 1, 1, 0, 1}); }));
  cases.push_back(op_case("avg_pool2d k=2", {{"x", rnd({1, 4, s, s})}},
                          [](Tape& t, auto& v) { return t.avg_pool2d(v[0], 2, 2); }));
  cases.push_back(op_case("avg_pool2d k=3 ceil", {{"x", rnd({1, 4, s, s})}},
                          [](Tape& t, auto& v) { return t.avg_pool2d(v[0], 3, 3, true); }));
  {
    std::vector<double> mean(8);
    std::vector<double> var(8);
    for (auto& m : mean) m = 0.1 * rng.normal();
    for (auto& v : var) v = rng.uniform(0.5, 1.5);
    cases.push_back(op_case("batch_norm", {{"x", rnd({1, 8, s, s})}, {"gamma", pos({8, 1, 1, 1})}, {"beta", rnd({8, 1, 1, 1})}},
                            [mean, var](Tape& t, auto& v) { return t.batch_norm(v[0], v[1], v[2], mean, var); }));
  }
  cases.push_back(op_case("layer_norm", {{"x", rnd({1, 8, s, s})}, {"gamma", pos({8, 1, 1, 1})}, {"beta", rnd({8, 1, 1, 1})}},
                          [](Tape& t, auto& v) { return t.layer_norm(v[0], v[1], v[2]); }));
  cases.push_back(op_case("relu", {{"x", rnd({1, 8, s, s})}}, [](Tape& t, auto& v) { return t.relu(v[0]); }, true));
  cases.push_back(op_case("gelu", {{"x", rnd({1, 8, s, s})}}, [](Tape& t, auto& v) { return t.gelu(v[0]); }));
  cases.push_back(op_case("linear", {{"x", rnd({1, 8, s, s})}, {"w", rnd({6, 8, 1, 1})}, {"b", rnd({6, 1, 1, 1})}},
                          [](Tape& t, auto& v) { return t.linear(v[0], v[1], v[2], 6); }));
  cases.push_back(op_case("global_avg_pool", {{"x", rnd({1, 8, s, s})}},
                          [](Tape& t, auto& v) { return t.global_avg_pool(v[0]); }));
  cases.push_back(op_case("scale", {{"x", rnd({1, 8, s, s})}}, [](Tape& t, auto& v) { return t.scale(v[0], 0.37); }));
  cases.push_back(op_case("split_heads", {{"x", rnd({1, 8, s, s})}},
                          [](Tape& t, auto& v) { return t.split_heads(v[0], 4); }));
  cases.push_back(op_case("merge_heads", {{"x", rnd({1, 2, s * s, 4})}},
                          [s](Tape& t, auto& v) { return t.merge_heads(v[0], s, s); }));
  cases.push_back(op_case("matmul a*b^T", {{"a", rnd({1, 2, 6, 4})}, {"b", rnd({1, 2, 5, 4})}},
                          [](Tape& t, auto& v) { return t.matmul(v[0], v[1], true); }));
  cases.push_back(op_case("matmul a*b", {{"a", rnd({1, 2, 6, 5})}, {"b", rnd({1, 2, 5, 4})}},
                          [](Tape& t, auto& v) { return t.matmul(v[0], v[1], false); }));
  cases.push_back(op_case("softmax", {{"x", rnd({1, 2, 6, 5})}}, [](Tape& t, auto& v) { return t.softmax(v[0]); }));
  cases.push_back(op_case("sum", {{"x", rnd({1, 8, s, s})}}, [](Tape& t, auto& v) { return t.sum(v[0]); }));

  const Shape in32{1, 32, s, s};
  const Shape in16{1, 16, s, s};
  std::uint64_t bs = seed * 1000;
  for (auto [norm, act] : {std::pair{NormKind::BatchNorm, ActKind::ReLU}, std::pair{NormKind::LayerNorm, ActKind::GELU}}) {
    const std::string tag = "[" + to_string(norm) + "_" + to_string(act) + "]";
    const bool kinks = act == ActKind::ReLU;
    const MHCASpec m{32, 8, norm, act};
    cases.push_back(block_case("mhca" + tag, block_params(m), in32,
                               [m](TapeExec& ex, ValueId x) { return mhca(ex, x, m); }, kinks, ++bs));
    const NCBSpec n{32, 32, 8, 3.0, norm, act};
    cases.push_back(block_case("ncb" + tag, block_params(n), in32,
                               [n](TapeExec& ex, ValueId x) { return ncb(ex, x, n); }, kinks, ++bs));
    const NTBSpec t{32, 32, 8, 2, 0.75, 2.0, norm, act, AttnScaleMode::Sqrt};
    cases.push_back(block_case("ntb r=0.75 s=2" + tag, block_params(t), in32,
                               [t](TapeExec& ex, ValueId x) { return ntb(ex, x, t); }, kinks, ++bs));
  }
  {
    const NCBSpec n{16, 32, 8, 3.0, NormKind::BatchNorm, ActKind::GELU};
    cases.push_back(block_case("ncb adapter 16->32[bn_gelu]", block_params(n), in16,
                               [n](TapeExec& ex, ValueId x) { return ncb(ex, x, n); }, false, ++bs));
    const EMHSASpec e2{32, 8, 2, NormKind::BatchNorm, AttnScaleMode::Sqrt};
    cases.push_back(block_case("emhsa s=2[bn]", block_params(e2), in32,
                               [e2](TapeExec& ex, ValueId x) { return emhsa(ex, x, e2); }, false, ++bs));
    const EMHSASpec e1{32, 8, 1, NormKind::LayerNorm, AttnScaleMode::Linear};
    cases.push_back(block_case("emhsa s=1 linear-scale[ln]", block_params(e1), in32,
                               [e1](TapeExec& ex, ValueId x) { return emhsa(ex, x, e1); }, false, ++bs));
    for (double r : {0.0, 0.5, 1.0}) {
      const NTBSpec t{16, 32, 8, 2, r, 2.0, NormKind::BatchNorm, ActKind::GELU, AttnScaleMode::Sqrt};
      std::ostringstream name;
      name << "ntb 16->32 r=" << r << " s=2[bn_gelu]";
      cases.push_back(block_case(name.str(), block_params(t), in16,
                                 [t](TapeExec& ex, ValueId x) { return ntb(ex, x, t); }, false, ++bs));
    }
  }

  std::vector<GradReport> out;
  std::uint64_t case_seed = seed;
  for (const auto& c : cases) {
    auto r = run_grad_case(c, ++case_seed);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace nextvit::verify
