// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "nextvit/analysis.hpp"
#include "nextvit/io.hpp"
#include "nextvit/verify.hpp"

using namespace nextvit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << seconds_since(t0);
  std::cout << (o.passed ? "PASS" : "FAIL") << "  criterion " << id << " " << title << ": " << o.detail << " ["
            << os.str() << " s]" << std::endl;
  failures += o.passed ? 0 : 1;
}

std::string pct(double value, double target) {
  std::ostringstream os;
  os << std::showpos << std::fixed << std::setprecision(2) << 100.0 * (value / target - 1.0) << "%";
  return os.str();
}

const std::vector<Variant> kVariants{Variant::S, Variant::B, Variant::L};

Outcome params_reproduction() {
  const double targets[] = {31.7e6, 44.8e6, 57.8e6};
  std::vector<ModelSpec> specs;
  for (Variant v : kVariants) specs.push_back(build_variant(v));
  const auto t0 = Clock::now();
  std::vector<std::int64_t> counts;
  for (const auto& s : specs) counts.push_back(count_params(s).params_total);
  const double elapsed = seconds_since(t0);
  Outcome o{elapsed < 1.0, ""};
  std::ostringstream os;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double rel = std::abs(static_cast<double>(counts[i]) / targets[i] - 1.0);
    o.passed = o.passed && rel <= 0.03;
    os << to_string(kVariants[i]) << " " << counts[i] << " (" << pct(counts[i], targets[i]) << " vs "
       << targets[i] / 1e6 << "M), ";
  }
  os << "tolerance 3%, count time " << elapsed << " s < 1 s";
  o.detail = os.str();
  return o;
}

Outcome flops_reproduction() {
  struct Case {
    Variant v;
    std::int64_t size;
    double target;
  };
  const std::vector<Case> cases{{Variant::S, 224, 5.8e9}, {Variant::B, 224, 8.3e9}, {Variant::L, 224, 10.8e9},
                                {Variant::S, 384, 17.3e9}};
  std::vector<ModelSpec> specs;
  for (const auto& c : cases) specs.push_back(build_variant(c.v));
  const auto t0 = Clock::now();
  std::vector<std::int64_t> flops;
  for (std::size_t i = 0; i < cases.size(); ++i) flops.push_back(count_flops(specs[i], cases[i].size, cases[i].size).flops_total);
  const double elapsed = seconds_since(t0);
  Outcome o{elapsed < 1.0, ""};
  std::ostringstream os;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const double rel = std::abs(static_cast<double>(flops[i]) / cases[i].target - 1.0);
    o.passed = o.passed && rel <= 0.10;
    os << to_string(cases[i].v) << "@" << cases[i].size << " " << flops[i] << " MACs (" << pct(flops[i], cases[i].target)
       << "), ";
  }
  os << "tolerance 10%, count time " << elapsed << " s < 1 s";
  o.detail = os.str();
  return o;
}

Outcome structural_trace() {
  set_num_threads(1);
  const ModelSpec s = build_variant(Variant::S);
  const ParamSet p = init_params(s, 1);
  SplitMix64 rng(2);
  const Tensor x = random_normal<float>(Shape{1, 3, 224, 224}, rng);
  std::vector<Shape> trace;
  ForwardOptions fo;
  fo.stage_trace = &trace;
  const auto t0 = Clock::now();
  const Matrix logits = forward(s, p, x, fo);
  const double elapsed = seconds_since(t0);
  const std::vector<Shape> expect{{1, 96, 56, 56}, {1, 256, 28, 28}, {1, 512, 14, 14}, {1, 1024, 7, 7}};
  const std::vector<Shape> stages(trace.begin() + 1, trace.end());
  std::ostringstream os;
  for (const auto& sh : stages) os << sh << " ";
  os << "logits (" << logits.rows() << "," << logits.cols() << "), forward " << elapsed << " s < 30 s single-threaded";
  return {stages == expect && logits.rows() == 1 && logits.cols() == 1000 && elapsed < 30.0, os.str()};
}

Outcome depth_law() {
  const std::vector<std::vector<std::int64_t>> depths{{3, 4, 10, 3}, {3, 4, 20, 3}, {3, 4, 30, 3}};
  bool ok = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < kVariants.size(); ++i) {
    const ModelSpec s = build_variant(kVariants[i]);
    const HybridPattern p = HybridPattern::for_variant(kVariants[i]);
    os << to_string(kVariants[i]) << " blocks [";
    for (std::size_t st = 0; st < 4; ++st) {
      const auto n = static_cast<std::int64_t>(s.stages[st].blocks.size());
      const std::int64_t ntb = s.stages[st].count(BlockType::NTB);
      const std::int64_t expect_ntb = st == 0 ? 0 : p.l[st];
      ok = ok && n == depths[i][st] && ntb == expect_ntb;
      os << n << (st < 3 ? "," : "");
    }
    os << "] NTB [";
    for (std::size_t st = 0; st < 4; ++st) os << s.stages[st].count(BlockType::NTB) << (st < 3 ? "," : "");
    os << "]; ";
  }
  os << "expected NTB per stage = L_i with none in stage 1";
  return {ok, os.str()};
}

Outcome oracle_equivalence() {
  bool ok = true;
  double attn = 0.0;
  for (auto [h, w] : {std::pair{1, 1}, std::pair{2, 3}, std::pair{3, 5}, std::pair{4, 4}, std::pair{5, 7},
                      std::pair{7, 7}, std::pair{8, 8}}) {
    const auto r = verify::check_emhsa_bruteforce(h, w, 1, 100 + h * 10 + w);
    ok = ok && r.passed;
    attn = std::max(attn, r.error);
  }
  const auto conv = verify::check_grouped_conv(Precision::Single, 7);
  const auto mhca = verify::check_mhca_dense(8);
  ok = ok && conv.passed && mhca.passed && attn < 1e-5 && conv.error < 1e-5 && mhca.error < 1e-6;
  std::ostringstream os;
  os << "e-mhsa s=1 vs brute force max " << attn << " (< 1e-5, grids 1x1..8x8); grouped conv single " << conv.error
     << " (< 1e-5); mhca h=1 vs dense conv " << mhca.error << " (< 1e-6)";
  return {ok, os.str()};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto reports = verify::run_gradcheck(8, 7);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::int64_t failed = 0;
  std::int64_t skipped = 0;
  std::string first_fail;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_err);
    skipped += r.skipped;
    if (!r.passed) {
      ++failed;
      if (first_fail.empty()) first_fail = verify::format(r);
    }
  }
  std::ostringstream os;
  os << reports.size() << " gradient reports, " << failed << " failed, worst rel err " << worst
     << " (< 1e-3, eps 1e-4, floor 1e-6), " << skipped << " coords skipped at relu kinks, " << elapsed << " s < 300 s";
  if (!first_fail.empty()) os << "; first failure: " << first_fail;
  return {failed == 0 && !reports.empty() && elapsed < 300.0, os.str()};
}

Outcome bn_folding() {
  const ModelSpec s = build_variant(Variant::S);
  ParamSet p = init_params(s, 11);
  randomize_norm_affine(p, 12);
  SplitMix64 rng(13);
  calibrate_batchnorm(s, p, random_normal<float>(Shape{4, 3, 224, 224}, rng));
  const FoldResult f = fold_batchnorm(s, p);
  const std::int64_t norms = trace_graph(f.spec).count(OpKind::Norm);
  const EquivReport r = check_equivalence(s, p, f.spec, f.params, 16, 14, 5e-3);
  std::ostringstream os;
  os << format_report(r) << ", norm nodes after fold " << norms << " (need 0), before "
     << trace_graph(s).count(OpKind::Norm);
  return {r.passed && r.samples == 16 && r.all_argmax() && r.max_abs_err < 5e-3 && norms == 0, os.str()};
}

std::set<std::string> ntb_prefixes(const ModelSpec& s) {
  std::set<std::string> out;
  for (std::size_t st = 0; st < s.stages.size(); ++st)
    for (std::size_t b = 0; b < s.stages[st].blocks.size(); ++b)
      if (s.stages[st].blocks[b].type == BlockType::NTB) {
        out.insert("stages." + std::to_string(st) + ".blocks." + std::to_string(b) + ".");
      }
  return out;
}

Outcome ratio_grid() {
  bool ok = true;
  std::ostringstream os;
  SplitMix64 rng(21);
  const Tensor x = random_normal<float>(Shape{1, 3, 224, 224}, rng);
  for (double r : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    ModelSpec s = build_variant(Variant::S);
    s.shrink_ratio = r;
    s.validate();
    bool widths = true;
    for (std::size_t st = 0; st < s.stages.size(); ++st)
      for (std::size_t b = 0; b < s.stages[st].blocks.size(); ++b)
        if (s.stages[st].blocks[b].type == BlockType::NTB) {
          const NTBSpec n = s.ntb(st, b);
          const BranchSplit sp = n.split();
          widths = widths && sp.high + sp.low == n.out_channels;
        }
    const Graph g = trace_graph(s);
    const auto prefixes = ntb_prefixes(s);
    std::int64_t emhsa = 0;
    std::int64_t ntb_mhca = 0;
    for (const auto& node : g.nodes) {
      if (node.path.find(".emhsa") != std::string::npos) ++emhsa;
      for (const auto& pre : prefixes) {
        if (node.path.rfind(pre, 0) == 0 && node.path.find(".mhca", pre.size() - 1) != std::string::npos) ++ntb_mhca;
      }
    }
    const Matrix logits = forward(s, init_params(s, 3), x);
    const bool finite = all_finite(logits.data());
    const bool shape_ok = logits.rows() == 1 && logits.cols() == 1000;
    bool this_ok = widths && finite && shape_ok;
    if (r == 0.0) this_ok = this_ok && emhsa == 0;
    if (r == 1.0) this_ok = this_ok && ntb_mhca == 0;
    ok = ok && this_ok;
    os << "r=" << r << " emhsa nodes " << emhsa << ", ntb mhca nodes " << ntb_mhca << ", params "
       << count_params(s).params_total << (this_ok ? "" : " BAD") << "; ";
  }
  os << "c_hi + c_lo = out everywhere";
  return {ok, os.str()};
}

Outcome ablation_grid() {
  bool ok = true;
  std::ostringstream os;
  SplitMix64 rng(31);
  const Tensor x = random_normal<float>(Shape{1, 3, 224, 224}, rng);
  std::vector<Shape> ref_trace;
  std::vector<Shape> ref_nodes;
  for (NormKind n : {NormKind::BatchNorm, NormKind::LayerNorm})
    for (ActKind a : {ActKind::ReLU, ActKind::GELU}) {
      ModelSpec s = build_variant(Variant::S);
      s.norm = n;
      s.act = a;
      s.validate();
      std::vector<Shape> trace;
      ForwardOptions fo;
      fo.stage_trace = &trace;
      const Matrix logits = forward(s, init_params(s, 4), x, fo);
      std::vector<Shape> nodes;
      for (const auto& node : trace_graph(s).nodes) nodes.push_back(node.shape);
      if (ref_trace.empty()) {
        ref_trace = trace;
        ref_nodes = nodes;
      }
      const bool same = trace == ref_trace && nodes == ref_nodes && all_finite(logits.data());
      std::string fold_outcome;
      bool fold_ok = false;
      try {
        (void)fold_batchnorm(s, init_params(s, 4));
        fold_outcome = "folds";
        fold_ok = n == NormKind::BatchNorm;
      } catch (const Error& e) {
        fold_outcome = std::string(to_string(e.kind()));
        fold_ok = n == NormKind::LayerNorm && e.kind() == ErrorKind::NotFoldable;
      }
      ok = ok && same && fold_ok;
      os << norm_act_name(n, a) << " trace " << (same ? "identical" : "DIFFERENT") << ", fold " << fold_outcome << "; ";
    }
  os << ref_nodes.size() << " node shapes compared per combination";
  return {ok, os.str()};
}

Outcome determinism() {
  set_num_threads(1);
  const ModelSpec s = build_variant(Variant::S);
  auto run = [&] {
    const ParamSet p = init_params(s, 42);
    SplitMix64 rng(43);
    const Tensor x = random_normal<float>(Shape{2, 3, 224, 224}, rng);
    return std::pair{p.checksum(), forward(s, p, x)};
  };
  const auto a = run();
  const auto b = run();
  const bool bitwise = a.second == b.second;
  std::ostringstream os;
  os << "param checksums " << std::hex << a.first << (a.first == b.first ? " == " : " != ") << b.first << std::dec
     << ", logits " << (bitwise ? "bitwise identical" : "DIFFER") << " over " << a.second.data().size() << " values";
  return {a.first == b.first && bitwise, os.str()};
}

Outcome bench_ordering() {
  std::vector<double> medians;
  std::ostringstream os;
  for (Variant v : kVariants) {
    const ModelSpec s = build_variant(v);
    const ParamSet p = init_params(s, 5);
    BenchOptions o;
    o.batch = 8;
    o.height = o.width = 224;
    o.warmup = 1;
    o.iters = 3;
    o.threads = 1;
    const BenchReport r = bench_run(s, p, o);
    medians.push_back(r.rows.front().median_ms);
    os << to_string(v) << " median " << std::fixed << std::setprecision(1) << r.rows.front().median_ms << " ms, ";
  }
  os << "batch 8 at 224, warmup 1, iters 3, 1 thread; need S < B < L";
  return {medians[0] < medians[1] && medians[1] < medians[2], os.str()};
}

}  // namespace

int main() {
  criterion(1, "param reproduction", params_reproduction);
  criterion(2, "FLOPs reproduction", flops_reproduction);
  criterion(3, "structural trace", structural_trace);
  criterion(4, "depth law", depth_law);
  criterion(5, "oracle equivalence", oracle_equivalence);
  criterion(6, "gradient suite", gradient_suite);
  criterion(7, "batch norm folding", bn_folding);
  criterion(8, "ratio grid", ratio_grid);
  criterion(9, "norm/act ablation grid", ablation_grid);
  criterion(10, "determinism", determinism);
  criterion(11, "bench ordering", bench_ordering);
  std::cout << (failures == 0 ? "all 11 criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
