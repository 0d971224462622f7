#include "nextvit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <sstream>

#include "nextvit/analysis.hpp"
#include "nextvit/io.hpp"
#include "nextvit/verify.hpp"

namespace nextvit {

namespace {

struct Size {
  std::int64_t h = 224;
  std::int64_t w = 224;
};

Size parse_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      const auto v = std::stoll(s, &used);
      if (used != s.size() || v < 1) throw std::invalid_argument(s);
      return {v, v};
    }
    const auto h = std::stoll(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string rest = s.substr(x + 1);
    const auto w = std::stoll(rest, &used);
    if (used != rest.size() || h < 1 || w < 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::logic_error&) {
    fail(ErrorKind::InvalidArgument, "size must look like 224 or 224x224, got \"" + s + "\"");
  }
}

// A config file, or S/B/L for a built-in variant.
ModelSpec resolve_spec(const std::string& arg) {
  if (!std::filesystem::exists(arg) && arg.size() == 1) return build_variant(parse_variant(arg));
  return load_config(arg);
}

std::string millions(std::int64_t v, double unit, const char* suffix) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(v) / unit << suffix;
  return os.str();
}

int describe(const std::string& config, const std::string& size, std::ostream& out) {
  const ModelSpec spec = resolve_spec(config);
  const Size sz = parse_size(size);
  const CostReport r = count_costs(spec, sz.h, sz.w);
  out << "blocks per stage:";
  for (const auto& st : spec.stages) {
    out << ' ' << st.blocks.size() << " (" << st.count(BlockType::NTB) << " NTB)";
  }
  out << "\nnorm_act " << norm_act_name(spec.norm, spec.act) << ", attention scale " << to_string(spec.attn_scale_mode)
      << ", shrink ratio " << spec.shrink_ratio << ", head dim " << spec.head_dim << "\n\n";
  const std::string macs_col = "MACs @" + std::to_string(sz.h) + "x" + std::to_string(sz.w);
  out << std::left << std::setw(22) << "module" << std::right << std::setw(14) << "params" << std::setw(18) << macs_col
      << '\n';
  for (const auto& m : r.modules) {
    out << std::left << std::setw(22) << m.path << std::right << std::setw(14) << m.params << std::setw(18) << m.flops
        << '\n';
  }
  out << std::left << std::setw(22) << "total" << std::right << std::setw(14) << r.params_total << std::setw(18)
      << r.flops_total << '\n';
  out << "\nparams " << millions(r.params_total, 1e6, "M") << ", FLOPs " << millions(r.flops_total, 1e9, "G") << '\n';
  return 0;
}

int init(const std::string& config, const std::string& path, std::uint64_t seed, bool calibrate, std::ostream& out) {
  const ModelSpec spec = resolve_spec(config);
  ParamSet params = init_params(spec, seed);
  if (calibrate) {
    randomize_norm_affine(params, seed + 1);
    SplitMix64 rng(seed + 2);
    const std::int64_t side = std::max<std::int64_t>(spec.reduction(), 224 / spec.reduction() * spec.reduction());
    calibrate_batchnorm(spec, params, random_normal<float>(Shape{4, spec.in_channels, side, side}, rng));
  }
  save_weights(params, path);
  out << "wrote " << params.size() << " arrays (" << params.scalar_count() << " values) to " << path << '\n';
  return 0;
}

int make_input(const std::string& path, std::int64_t batch, std::int64_t channels, const std::string& size,
               std::uint64_t seed, std::ostream& out) {
  const Size sz = parse_size(size);
  if (batch < 1 || channels < 1) fail(ErrorKind::InvalidArgument, "batch and channels must be >= 1");
  SplitMix64 rng(seed);
  const Tensor x = random_normal<float>(Shape{batch, channels, sz.h, sz.w}, rng);
  save_input(x, path);
  out << "wrote input " << x.shape() << " to " << path << '\n';
  return 0;
}

int infer(const std::string& config, const std::string& weights, const std::string& input, bool trace,
          std::ostream& out) {
  const ModelSpec spec = resolve_spec(config);
  const ParamSet params = load_weights(weights);
  validate_params(model_params(spec), params);
  const Tensor x = load_input(input);
  std::vector<Shape> shapes;
  ForwardOptions fo;
  if (trace) fo.stage_trace = &shapes;
  const Matrix logits = forward(spec, params, x, fo);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    out << (i == 0 ? std::string("stem") : "stage " + std::to_string(i)) << ' ' << shapes[i] << '\n';
  }
  const auto top = argmax_rows(logits);
  out << std::setprecision(7);
  for (std::int64_t r = 0; r < logits.rows(); ++r) {
    out << "sample " << r << " argmax " << top[static_cast<std::size_t>(r)] << "\nlogits";
    for (float v : logits.row(r)) out << ' ' << v;
    out << '\n';
  }
  return 0;
}

struct BenchArgs {
  std::string config;
  std::string weights;
  std::string size = "224x224";
  std::string csv;
  std::string algo = "im2col";
  BenchOptions opts;
};

int bench(const BenchArgs& a, std::ostream& out) {
  const ModelSpec spec = resolve_spec(a.config);
  BenchOptions o = a.opts;
  const Size sz = parse_size(a.size);
  o.height = sz.h;
  o.width = sz.w;
  o.algo = parse_conv_algo(a.algo);
  ParamSet params;
  if (a.weights.empty()) {
    params = init_params(spec, o.seed);
  } else {
    params = load_weights(a.weights);
    validate_params(model_params(spec), params);
  }
  const BenchReport r = bench_run(spec, params, o);
  out << bench_table(r);
  if (!a.csv.empty()) {
    write_file(a.csv, bench_csv(r));
    out << "wrote " << a.csv << '\n';
  }
  return 0;
}

int gradcheck(std::int64_t max_size, std::uint64_t seed, std::ostream& out) {
  const auto reports = verify::run_gradcheck(max_size, seed);
  std::int64_t passed = 0;
  for (const auto& r : reports) {
    out << verify::format(r) << '\n';
    passed += r.passed ? 1 : 0;
  }
  out << passed << "/" << reports.size() << " gradient checks passed\n";
  return passed == static_cast<std::int64_t>(reports.size()) ? 0 : 1;
}

struct FoldArgs {
  std::string config;
  std::string weights;
  std::string out;
  std::string size = "224x224";
  std::int64_t samples = 16;
  double tol = 5e-3;
  std::uint64_t seed = 0;
};

int fold(const FoldArgs& a, std::ostream& out) {
  const ModelSpec spec = resolve_spec(a.config);
  const ParamSet params = load_weights(a.weights);
  validate_params(model_params(spec), params);
  const Size sz = parse_size(a.size);
  const FoldResult folded = fold_batchnorm(spec, params);
  std::filesystem::path cfg_path(a.out);
  cfg_path += ".json";
  save_weights(folded.params, a.out);
  write_file(cfg_path, render_config(folded.spec));
  const std::int64_t norms = trace_graph(folded.spec, spec.reduction(), spec.reduction()).count(OpKind::Norm);
  out << "wrote " << a.out << " and " << cfg_path.string() << '\n';
  out << "norm nodes after fold: " << norms << '\n';
  const EquivReport r = check_equivalence(spec, params, folded.spec, folded.params, a.samples, a.seed, a.tol, sz.h, sz.w);
  out << format_report(r) << '\n';
  return r.passed && r.all_argmax() && norms == 0 ? 0 : 1;
}

int selftest(std::uint64_t seed, std::ostream& out) {
  const auto results = verify::run_selftest(seed);
  std::int64_t passed = 0;
  for (const auto& r : results) {
    out << verify::format(r) << '\n';
    passed += r.passed ? 1 : 0;
  }
  out << passed << "/" << results.size() << " oracle checks passed\n";
  return passed == static_cast<std::int64_t>(results.size()) ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Next-ViT inference and verification engine", "nextvit"};
  app.require_subcommand(1);
  std::function<int()> action;

  std::string config;
  std::string size = "224x224";
  auto* describe_cmd = app.add_subcommand("describe", "Parameter and MAC counts per module");
  describe_cmd->add_option("config", config, "Config file, or S/B/L")->required();
  describe_cmd->add_option("--size", size, "Input size HxW");
  describe_cmd->callback([&] { action = [&] { return describe(config, size, out); }; });

  std::string out_path;
  std::uint64_t seed = 0;
  auto* init_cmd = app.add_subcommand("init", "Write seeded random weights for a config");
  init_cmd->add_option("config", config, "Config file, or S/B/L")->required();
  init_cmd->add_option("--out", out_path, "Weight file to write")->required();
  bool calibrate = false;
  init_cmd->add_option("--seed", seed, "Initialization seed");
  init_cmd->add_flag("--calibrate", calibrate,
                     "Randomize norm affines and set batch norm statistics from 4 random inputs");
  init_cmd->callback([&] { action = [&] { return init(config, out_path, seed, calibrate, out); }; });

  std::int64_t batch = 1;
  std::int64_t channels = 3;
  auto* input_cmd = app.add_subcommand("make-input", "Write a seeded standard-normal input tensor");
  input_cmd->add_option("--out", out_path, "Tensor file to write")->required();
  input_cmd->add_option("--batch", batch, "Batch size");
  input_cmd->add_option("--channels", channels, "Input channels");
  input_cmd->add_option("--size", size, "Input size HxW");
  input_cmd->add_option("--seed", seed, "Sampling seed");
  input_cmd->callback([&] { action = [&] { return make_input(out_path, batch, channels, size, seed, out); }; });

  std::string weights;
  std::string input;
  bool trace = false;
  auto* infer_cmd = app.add_subcommand("infer", "Print logits for an input tensor file");
  infer_cmd->add_option("config", config, "Config file, or S/B/L")->required();
  infer_cmd->add_option("weights", weights, "Weight file")->required();
  infer_cmd->add_option("input", input, "Input tensor file")->required();
  infer_cmd->add_flag("--trace", trace, "Print stem and stage output shapes");
  infer_cmd->callback([&] { action = [&] { return infer(config, weights, input, trace, out); }; });

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Forward latency: median and p95 over timed iterations");
  bench_cmd->add_option("config", ba.config, "Config file, or S/B/L")->required();
  bench_cmd->add_option("--weights", ba.weights, "Weight file (seeded random weights otherwise)");
  bench_cmd->add_option("--batch", ba.opts.batch, "Batch size");
  bench_cmd->add_option("--size", ba.size, "Input size HxW");
  bench_cmd->add_option("--warmup", ba.opts.warmup, "Untimed iterations");
  bench_cmd->add_option("--iters", ba.opts.iters, "Timed iterations");
  bench_cmd->add_option("--csv", ba.csv, "Also write the report as CSV");
  bench_cmd->add_flag("--per-block", ba.opts.per_block, "Add stem, block and head rows");
  bench_cmd->add_option("--threads", ba.opts.threads, "Worker threads for the forward");
  bench_cmd->add_option("--conv-algo", ba.algo, "direct or im2col");
  bench_cmd->add_option("--seed", ba.opts.seed, "Seed for weights and input");
  bench_cmd->callback([&] { action = [&] { return bench(ba, out); }; });

  std::int64_t max_size = 8;
  std::uint64_t grad_seed = 7;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Analytic gradients against central differences");
  grad_cmd->add_option("--max-size", max_size, "Largest spatial extent checked (at most 8)");
  grad_cmd->add_option("--seed", grad_seed, "Seed for inputs and parameters");
  grad_cmd->callback([&] { action = [&] { return gradcheck(max_size, grad_seed, out); }; });

  FoldArgs fa;
  auto* fold_cmd = app.add_subcommand("fold", "Fold batch norms and compare against the original");
  fold_cmd->add_option("config", fa.config, "Config file, or S/B/L")->required();
  fold_cmd->add_option("weights", fa.weights, "Weight file")->required();
  fold_cmd->add_option("--out", fa.out, "Folded weight file; the config goes to <out>.json")->required();
  fold_cmd->add_option("--samples", fa.samples, "Random inputs compared");
  fold_cmd->add_option("--size", fa.size, "Input size HxW for the comparison");
  fold_cmd->add_option("--tol", fa.tol, "Max abs logit error");
  fold_cmd->add_option("--seed", fa.seed, "Seed for the comparison inputs");
  fold_cmd->callback([&] { action = [&] { return fold(fa, out); }; });

  std::uint64_t self_seed = 2024;
  auto* self_cmd = app.add_subcommand("selftest", "Kernels and blocks against reference oracles");
  self_cmd->add_option("--seed", self_seed, "Seed for random cases");
  self_cmd->callback([&] { action = [&] { return selftest(self_seed, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace nextvit
