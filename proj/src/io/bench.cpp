#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "nextvit/io.hpp"

namespace nextvit {

std::string to_string(ConvAlgo algo) { return algo == ConvAlgo::Direct ? "direct" : "im2col"; }

ConvAlgo parse_conv_algo(std::string_view name) {
  if (name == "direct") return ConvAlgo::Direct;
  if (name == "im2col") return ConvAlgo::Im2col;
  fail(ErrorKind::InvalidArgument, "conv algo must be direct or im2col, got " + std::string(name));
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "percentile of no values");
  if (!(p > 0.0 && p <= 100.0)) fail(ErrorKind::InvalidArgument, "percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

namespace {

using Clock = std::chrono::steady_clock;

// Attributes wall time to top-level targets; nested scopes are ignored.
class BlockTimer : public ScopeObserver {
 public:
  void enter(const std::string& path) override {
    const std::string key = target_of(path);
    if (key.empty() || !open_.empty()) return;
    open_ = key;
    opened_path_ = path;
    start_ = Clock::now();
  }

  void exit(const std::string& path) override {
    if (open_.empty() || path != opened_path_) return;
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    current_[open_] += ms;
    if (std::find(order_.begin(), order_.end(), open_) == order_.end()) order_.push_back(open_);
    open_.clear();
  }

  void finish_iteration() {
    for (const auto& [key, ms] : current_) samples_[key].push_back(ms);
    current_.clear();
  }

  const std::vector<std::string>& order() const noexcept { return order_; }
  const std::vector<double>& samples(const std::string& key) { return samples_[key]; }

 private:
  static std::string target_of(const std::string& path) {
    if (path.rfind("stem.", 0) == 0) return "stem";
    if (path == "head") return "head";
    if (path.rfind("stages.", 0) != 0) return {};
    // stages.i.embed -> stages.i.blocks.0; stages.i.blocks.j exactly.
    const auto p1 = path.find('.', 7);
    if (p1 == std::string::npos) return {};
    const std::string stage = path.substr(0, p1);
    const std::string rest = path.substr(p1 + 1);
    if (rest == "embed") return stage + ".blocks.0";
    if (rest.rfind("blocks.", 0) == 0 && rest.find('.', 7) == std::string::npos) return path;
    return {};
  }

  std::string open_;
  std::string opened_path_;
  Clock::time_point start_{};
  std::map<std::string, double> current_;
  std::map<std::string, std::vector<double>> samples_;
  std::vector<std::string> order_;
};

BenchRow make_row(std::string target, const BenchOptions& o, std::vector<double> samples) {
  BenchRow r;
  r.target = std::move(target);
  r.batch = o.batch;
  r.height = o.height;
  r.width = o.width;
  r.warmup = o.warmup;
  r.iters = o.iters;
  r.median_ms = median(samples);
  r.p95_ms = percentile(samples, 95.0);
  r.samples_ms = std::move(samples);
  return r;
}

class ThreadScope {
 public:
  explicit ThreadScope(int threads) : saved_(num_threads()) { set_num_threads(threads); }
  ~ThreadScope() { set_num_threads(saved_); }
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int saved_;
};

}  // namespace

BenchReport bench_run(const ModelSpec& spec, const ParamSet& params, const BenchOptions& opts) {
  if (opts.iters < 1) fail(ErrorKind::InvalidArgument, "iters must be >= 1");
  if (opts.warmup < 0) fail(ErrorKind::InvalidArgument, "warmup must be >= 0");
  if (opts.batch < 1) fail(ErrorKind::InvalidArgument, "batch must be >= 1");
  ThreadScope threads(opts.threads);
  SplitMix64 rng(opts.seed);
  const Tensor x = random_normal<float>(Shape{opts.batch, spec.in_channels, opts.height, opts.width}, rng);
  check_input(spec, x.shape());

  ForwardOptions fo;
  fo.algo = opts.algo;
  for (std::int64_t i = 0; i < opts.warmup; ++i) (void)forward(spec, params, x, fo);

  BlockTimer timer;
  if (opts.per_block) fo.observer = &timer;
  std::vector<double> total;
  for (std::int64_t i = 0; i < opts.iters; ++i) {
    const auto t0 = Clock::now();
    (void)forward(spec, params, x, fo);
    total.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    timer.finish_iteration();
  }

  BenchReport report;
  report.threads = opts.threads;
  report.algo = opts.algo;
  report.rows.push_back(make_row("model", opts, std::move(total)));
  if (opts.per_block) {
    for (const auto& key : timer.order()) report.rows.push_back(make_row(key, opts, timer.samples(key)));
  }
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::ostringstream os;
  os << "# threads=" << report.threads << " conv_algo=" << to_string(report.algo) << " clock=steady\n";
  os << "target,batch,height,width,warmup,iters,median_ms,p95_ms\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : report.rows) {
    os << r.target << ',' << r.batch << ',' << r.height << ',' << r.width << ',' << r.warmup << ',' << r.iters << ','
       << r.median_ms << ',' << r.p95_ms << '\n';
  }
  return os.str();
}

std::string bench_table(const BenchReport& report) {
  std::ostringstream os;
  os << "threads " << report.threads << ", conv algo " << to_string(report.algo) << "\n";
  os << std::left << std::setw(24) << "target" << std::right << std::setw(7) << "batch" << std::setw(11) << "size"
     << std::setw(8) << "warmup" << std::setw(7) << "iters" << std::setw(13) << "median ms" << std::setw(13)
     << "p95 ms" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : report.rows) {
    const std::string size = std::to_string(r.height) + "x" + std::to_string(r.width);
    os << std::left << std::setw(24) << r.target << std::right << std::setw(7) << r.batch << std::setw(11) << size
       << std::setw(8) << r.warmup << std::setw(7) << r.iters << std::setw(13) << r.median_ms << std::setw(13)
       << r.p95_ms << '\n';
  }
  return os.str();
}

}  // namespace nextvit
