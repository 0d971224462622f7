#include <algorithm>
#include <cmath>
#include <sstream>

#include "nextvit/analysis.hpp"
#include "nextvit/exec.hpp"
#include "nextvit/verify.hpp"

namespace nextvit::verify {

namespace {

template <typename A, typename B>
double max_diff(const A& a, const B& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

CheckResult check(std::string name, double error, double tol, std::string detail = {}) {
  return {std::move(name), error, tol, tol == 0.0 ? error == 0.0 : error < tol, std::move(detail)};
}

std::vector<double> random_vec(std::size_t n, SplitMix64& rng, double stddev) {
  std::vector<double> v(n);
  for (auto& x : v) x = stddev * rng.normal();
  return v;
}

struct ConvCase {
  Shape x;
  ConvGeometry g;
};

std::vector<ConvCase> conv_cases() {
  std::vector<ConvCase> out;
  for (int groups : {1, 2, 4, 8})
    for (std::int64_t k : {1, 3})
      for (int stride : {1, 2}) {
        const int pad = k == 3 ? 1 : 0;
        out.push_back({Shape{2, 8, 9, 7}, ConvGeometry{8, 16, k, stride, pad, groups}});
      }
  out.push_back({Shape{1, 6, 5, 5}, ConvGeometry{6, 6, 3, 1, 0, 3}});
  out.push_back({Shape{1, 4, 4, 4}, ConvGeometry{4, 4, 3, 2, 1, 4}});
  return out;
}

std::string geo_str(const ConvCase& c) {
  std::ostringstream os;
  os << c.x << " k=" << c.g.kernel << " s=" << c.g.stride << " p=" << c.g.padding << " g=" << c.g.groups;
  return os.str();
}

template <typename T>
CheckResult grouped_conv_impl(std::uint64_t seed, double tol, const char* label) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  std::string where;
  for (const auto& c : conv_cases()) {
    const TensorD x = random_normal<double>(c.x, rng);
    const auto fan_in = static_cast<double>(c.g.in_per_group() * c.g.kernel * c.g.kernel);
    const auto w = random_vec(static_cast<std::size_t>(c.g.weight_numel()), rng, 1.0 / std::sqrt(fan_in));
    const auto b = random_vec(static_cast<std::size_t>(c.g.out_channels), rng, 0.1);
    const TensorD ref = naive_conv2d(x, w, b, c.g);
    const BasicTensor<T> xt = x.cast<T>();
    const std::vector<T> wt(w.begin(), w.end());
    const std::vector<T> bt(b.begin(), b.end());
    for (ConvAlgo algo : {ConvAlgo::Direct, ConvAlgo::Im2col}) {
      const BasicTensor<T> y = conv2d<T>(xt, wt, bt, c.g, algo);
      const double e = y.shape() == ref.shape() ? max_diff(y.data(), ref.data()) : INFINITY;
      if (e >= worst) {
        worst = e;
        where = geo_str(c) + (algo == ConvAlgo::Direct ? " direct" : " im2col");
      }
    }
  }
  return check(std::string("grouped conv vs naive loops (") + label + ")", worst, tol, "worst at " + where);
}

CheckResult im2col_vs_direct(std::uint64_t seed) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (const auto& c : conv_cases()) {
    const Tensor x = random_normal<float>(c.x, rng);
    const auto fan_in = static_cast<double>(c.g.in_per_group() * c.g.kernel * c.g.kernel);
    const Tensor w = random_normal<float>(Shape{1, 1, 1, c.g.weight_numel()}, rng, 1.0 / std::sqrt(fan_in));
    const Tensor a = conv2d<float>(x, w.data(), {}, c.g, ConvAlgo::Direct);
    const Tensor b = conv2d<float>(x, w.data(), {}, c.g, ConvAlgo::Im2col);
    worst = std::max(worst, max_diff(a.data(), b.data()));
  }
  return check("im2col conv vs direct conv (single)", worst, 1e-5);
}

// A grouped conv equals independent convs over channel slices, concatenated.
CheckResult groups_as_slices(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const ConvGeometry g{8, 12, 3, 1, 1, 4};
  const TensorD x = random_normal<double>(Shape{1, 8, 6, 6}, rng);
  const auto w = random_vec(static_cast<std::size_t>(g.weight_numel()), rng, 0.3);
  const TensorD whole = conv2d<double>(x, w, {}, g);
  TensorD joined;
  const std::int64_t per_w = g.out_per_group() * g.in_per_group() * 9;
  for (int i = 0; i < g.groups; ++i) {
    const TensorD xs = slice_channels(x, i * g.in_per_group(), (i + 1) * g.in_per_group());
    const std::span<const double> ws(w.data() + i * per_w, static_cast<std::size_t>(per_w));
    const TensorD part = conv2d<double>(xs, ws, {}, ConvGeometry{g.in_per_group(), g.out_per_group(), 3, 1, 1, 1});
    joined = i == 0 ? part : concat_channels(joined, part);
  }
  return check("grouped conv equals per-group slices", max_diff(whole.data(), joined.data()), 1e-12);
}

// Perturbing one group's inputs leaves every other group's outputs unchanged.
CheckResult group_locality(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const ConvGeometry g{16, 16, 3, 1, 1, 4};
  TensorD x = random_normal<double>(Shape{1, 16, 5, 5}, rng);
  const auto w = random_vec(static_cast<std::size_t>(g.weight_numel()), rng, 0.3);
  const TensorD before = conv2d<double>(x, w, {}, g);
  for (std::int64_t c = 4; c < 8; ++c)
    for (std::int64_t h = 0; h < 5; ++h) x(0, c, h, 2) += 1.0;
  const TensorD after = conv2d<double>(x, w, {}, g);
  double leak = 0.0;
  bool moved = false;
  for (std::int64_t c = 0; c < 16; ++c) {
    const double d = max_diff(before.plane(0, c), after.plane(0, c));
    if (c / 4 == 1) {
      moved = moved || d > 0.0;
    } else {
      leak = std::max(leak, d);
    }
  }
  return check("grouped conv head locality", moved ? leak : INFINITY, 0.0, moved ? "" : "own group did not change");
}

CheckResult pool_ramp() {
  TensorD x(Shape{1, 1, 4, 4});
  for (std::int64_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  const TensorD y = avg_pool2d<double>(x, 2, 2);
  const std::vector<double> expect{2.5, 4.5, 10.5, 12.5};
  double e = max_diff(y.data(), std::span<const double>(expect));
  TensorD z(Shape{1, 2, 5, 5});
  for (std::int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<double>(i) * 0.5 - 3.0;
  for (std::int64_t k : {2, 3, 4}) {
    const TensorD a = avg_pool2d<double>(z, k, k, true);
    const TensorD b = naive_avg_pool(z, k, true);
    e = std::max(e, a.shape() == b.shape() ? max_diff(a.data(), b.data()) : INFINITY);
  }
  return check("avg pool ramp and ceil windows", e, 1e-12);
}

CheckResult softmax_known() {
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  const std::vector<double> expect{std::exp(1.0) / z, std::exp(2.0) / z, std::exp(3.0) / z};
  const MatrixD m(1, 3, {1.0, 2.0, 3.0});
  double e = max_diff(softmax_rows(m).data(), std::span<const double>(expect));
  SplitMix64 rng(5);
  const TensorD x = random_normal<double>(Shape{1, 2, 3, 7}, rng, 4.0);
  const TensorD s = softmax_last(x);
  for (std::int64_t r = 0; r < 6; ++r) {
    const auto row = naive_softmax(x.data().subspan(static_cast<std::size_t>(r * 7), 7));
    e = std::max(e, max_diff(s.data().subspan(static_cast<std::size_t>(r * 7), 7), std::span<const double>(row)));
  }
  return check("softmax of [1,2,3] and random rows", e, 1e-12);
}

CheckResult matmul_known() {
  const MatrixD a(2, 2, {1, 2, 3, 4});
  const MatrixD b(2, 2, {5, 6, 7, 8});
  const std::vector<double> expect{19, 22, 43, 50};
  return check("matmul [[1,2],[3,4]]x[[5,6],[7,8]]", max_diff(matmul(a, b).data(), std::span<const double>(expect)),
               0.0);
}

CheckResult norms_vs_naive(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const TensorD x = random_normal<double>(Shape{2, 6, 3, 4}, rng);
  const auto gamma = random_vec(6, rng, 1.0);
  const auto beta = random_vec(6, rng, 1.0);
  const auto mean = random_vec(6, rng, 1.0);
  std::vector<double> var(6);
  for (auto& v : var) v = rng.uniform(0.5, 2.0);
  const double e1 = max_diff(batch_norm_infer<double>(x, gamma, beta, mean, var).data(),
                             naive_batch_norm(x, gamma, beta, mean, var).data());
  const double e2 = max_diff(layer_norm<double>(x, gamma, beta).data(), naive_layer_norm(x, gamma, beta).data());
  return check("batch norm and layer norm vs formula", std::max(e1, e2), 1e-12);
}

CheckResult tape_matches_eager(std::uint64_t seed) {
  const NTBSpec spec{16, 32, 8, 2, 0.75, 2.0, NormKind::BatchNorm, ActKind::GELU, AttnScaleMode::Sqrt};
  const ParamSet params = random_params(block_params(spec), seed);
  SplitMix64 rng(seed);
  const TensorD x = random_normal<double>(Shape{1, 16, 6, 6}, rng);
  const TensorD eager = ntb_forward(x, spec, params);
  Tape tape;
  TapeExec ex(tape, params);
  const ValueId y = ntb(ex, tape.leaf(x), spec);
  return check("tape forward vs eager forward (ntb, double)", max_diff(tape.value(y).data(), eager.data()), 1e-12);
}

ModelSpec small_spec() { return tiny_model_spec(); }

CheckResult small_fold(std::uint64_t seed) {
  const ModelSpec spec = small_spec();
  ParamSet params = init_params(spec, seed);
  randomize_norm_affine(params, seed + 1);
  SplitMix64 rng(seed + 2);
  calibrate_batchnorm(spec, params, random_normal<float>(Shape{8, 3, 64, 64}, rng));
  const FoldResult folded = fold_batchnorm(spec, params);
  const Graph g = trace_graph(folded.spec, 64, 64);
  const EquivReport r = check_equivalence(spec, params, folded.spec, folded.params, 4, seed + 3, 1e-4, 64, 64);
  const bool ok = r.all_argmax() && g.count(OpKind::Norm) == 0;
  return check("batch norm fold on a small model", ok ? r.max_abs_err : INFINITY, 1e-4, format_report(r));
}

CheckResult batch_invariance(std::uint64_t seed) {
  const ModelSpec spec = small_spec();
  const ParamSet params = init_params(spec, seed);
  SplitMix64 rng(seed);
  const Tensor x = random_normal<float>(Shape{3, 3, 32, 32}, rng);
  const Matrix all = forward(spec, params, x);
  double e = 0.0;
  for (std::int64_t i = 0; i < 3; ++i) {
    const Matrix one = forward(spec, params, slice_batch(x, i, i + 1));
    e = std::max(e, max_diff(one.data(), all.row(i)));
  }
  return check("batch of 3 vs 3 single forwards", e, 1e-5);
}

}  // namespace

ModelSpec tiny_model_spec() {
  HybridPattern p;
  p.n = {1, 1, 1, 1};
  p.l = {1, 1, 1, 1};
  ModelSpec spec = build_hybrid(p, default_widths(), 10);
  for (auto& st : spec.stages) {
    st.embed.out_channels /= 4;
    for (auto& b : st.blocks) {
      b.in_channels /= 4;
      b.out_channels /= 4;
    }
  }
  spec.stem.channels = {16, 8, 16, 16};
  spec.head_dim = 8;
  spec.validate();
  return spec;
}

std::string format(const CheckResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS " : "FAIL ") << r.name << ": error=" << r.error << " tol=" << r.tolerance;
  if (!r.detail.empty()) os << " (" << r.detail << ")";
  return os.str();
}

CheckResult check_grouped_conv(Precision precision, std::uint64_t seed) {
  return precision == Precision::Single ? grouped_conv_impl<float>(seed, 1e-5, "single")
                                        : grouped_conv_impl<double>(seed, 1e-12, "double");
}

CheckResult check_emhsa_bruteforce(std::int64_t h, std::int64_t w, std::int64_t sr, std::uint64_t seed) {
  const EMHSASpec spec{32, 8, sr, NormKind::BatchNorm, AttnScaleMode::Sqrt};
  const ParamSet params = random_params(block_params(spec), seed);
  SplitMix64 rng(seed);
  const TensorD x = random_normal<double>(Shape{2, 32, h, w}, rng);
  const Tensor y = emhsa_forward(x.cast<float>(), spec, params);
  const TensorD ref = brute_force_attention(x, spec, params);
  std::ostringstream name;
  name << "e-mhsa s=" << sr << " vs brute force at " << h << "x" << w << " (single)";
  return check(name.str(), y.shape() == ref.shape() ? max_diff(y.data(), ref.data()) : INFINITY, 1e-5);
}

CheckResult check_mhca_dense(std::uint64_t seed) {
  // head_dim == channels gives a single head, so the grouped conv is dense.
  const MHCASpec spec{16, 16, NormKind::BatchNorm, ActKind::ReLU};
  const ParamSet params = random_params(block_params(spec), seed);
  SplitMix64 rng(seed);
  const TensorD x = random_normal<double>(Shape{2, 16, 7, 7}, rng);
  const TensorD y = mhca_forward(x, spec, params);
  const TensorD ref = naive_mhca(x, spec, params);
  const Tensor yf = mhca_forward(x.cast<float>(), spec, params);
  std::ostringstream detail;
  detail << "double engine; single engine error " << max_diff(yf.data(), ref.data());
  return check("mhca h=1 vs dense conv", max_diff(y.data(), ref.data()), 1e-6, detail.str());
}

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_grouped_conv(Precision::Single, seed));
  out.push_back(check_grouped_conv(Precision::Double, seed));
  out.push_back(im2col_vs_direct(seed + 1));
  out.push_back(groups_as_slices(seed + 2));
  out.push_back(group_locality(seed + 3));
  out.push_back(pool_ramp());
  out.push_back(softmax_known());
  out.push_back(matmul_known());
  out.push_back(norms_vs_naive(seed + 4));
  for (auto [h, w] : {std::pair{1, 1}, std::pair{3, 5}, std::pair{7, 7}, std::pair{8, 8}}) {
    out.push_back(check_emhsa_bruteforce(h, w, 1, seed + 5));
  }
  out.push_back(check_emhsa_bruteforce(8, 8, 2, seed + 6));
  out.push_back(check_emhsa_bruteforce(7, 5, 4, seed + 7));
  out.push_back(check_mhca_dense(seed + 8));
  out.push_back(tape_matches_eager(seed + 9));
  out.push_back(small_fold(seed + 10));
  out.push_back(batch_invariance(seed + 11));
  return out;
}

}  // namespace nextvit::verify
