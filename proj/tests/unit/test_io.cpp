#include <gtest/gtest.h>

#include <filesystem>

#include "generators.hpp"
#include "nextvit/error.hpp"
#include "nextvit/io.hpp"
#include "nextvit/verify.hpp"

using namespace nextvit;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::IoError;
}

std::filesystem::path temp_path(const std::string& leaf) {
  const auto dir = std::filesystem::temp_directory_path() / "nextvit_unit";
  std::filesystem::create_directories(dir);
  return dir / leaf;
}

}  // namespace

TEST(Weights, EmptySetIsNineBytes) {
  const std::string bytes = encode_weights(ParamSet{});
  ASSERT_EQ(bytes.size(), 9u);
  EXPECT_EQ(bytes.substr(0, 4), "NVTW");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes.substr(5), std::string(4, '\0'));
}

TEST(Weights, ByteLayoutOfOneEntry) {
  ParamSet p;
  p.insert("ab", ParamArray({2}, std::vector<float>{1.0f, -2.0f}));
  const std::string b = encode_weights(p);
  const std::string expect = std::string("NVTW\x01\x01\x00\x00\x00", 9) + std::string("\x02\x00" "ab", 4) +
                             std::string("\x00\x01\x02\x00\x00\x00", 6) +
                             std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8);
  EXPECT_EQ(b, expect);
}

TEST(WeightsProperty, RoundTripIsIdentity) {
  for (int i = 0; i < 40; ++i) {
    gen::Gen g(5000 + i);
    const ParamSet p = g.param_set();
    const std::string bytes = encode_weights(p);
    const ParamSet q = decode_weights(bytes);
    EXPECT_EQ(p, q) << "case " << i;
    EXPECT_EQ(encode_weights(q), bytes) << "case " << i;
  }
}

TEST(WeightsProperty, EveryTruncationIsRejected) {
  gen::Gen g(51);
  ParamSet p;
  p.insert("x", ParamArray({3, 2}, 0.25f));
  p.insert("y.bias", ParamArray({4}, -1.0f));
  const std::string bytes = encode_weights(p);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const ErrorKind k = kind_of([&] { (void)decode_weights(std::string_view(bytes).substr(0, n)); });
    EXPECT_TRUE(k == ErrorKind::TruncatedFile || k == ErrorKind::BadMagic) << n;
  }
}

TEST(Weights, CorruptHeadersAndEntries) {
  ParamSet p;
  p.insert("w", ParamArray({1}, 2.0f));
  const std::string good = encode_weights(p);
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { (void)decode_weights(magic); }), ErrorKind::BadMagic);
  std::string version = good;
  version[4] = 2;
  EXPECT_EQ(kind_of([&] { (void)decode_weights(version); }), ErrorKind::BadVersion);
  std::string dtype = good;
  dtype[9 + 2 + 1] = 1;
  EXPECT_EQ(kind_of([&] { (void)decode_weights(dtype); }), ErrorKind::DtypeUnsupported);
  EXPECT_EQ(kind_of([&] { (void)decode_weights(good + "z"); }), ErrorKind::TrailingData);
  std::string dup = good;
  dup[5] = 2;
  dup += good.substr(9);
  EXPECT_EQ(kind_of([&] { (void)decode_weights(dup); }), ErrorKind::DuplicateName);
}

TEST(Weights, FilesAndInputs) {
  gen::Gen g(52);
  const ParamSet p = g.param_set();
  const auto path = temp_path("w.nvtw");
  save_weights(p, path);
  EXPECT_EQ(load_weights(path), p);
  const Tensor x = g.tensor<float>(Shape{2, 3, 4, 5});
  save_input(x, path);
  EXPECT_EQ(load_input(path), x);
  save_weights(p, path);
  EXPECT_NE(kind_of([&] { (void)load_input(path); }), ErrorKind::IoError);
  EXPECT_EQ(kind_of([&] { (void)load_weights(temp_path("missing.nvtw")); }), ErrorKind::IoError);
}

TEST(Config, VariantExpandsToBuiltModel) {
  EXPECT_EQ(parse_config(R"({"variant": "S", "num_classes": 1000})"), build_variant(Variant::S));
  EXPECT_EQ(parse_config("{}"), build_variant(Variant::S));
  EXPECT_EQ(parse_config(R"({"variant": "L", "num_classes": 7})"), build_variant(Variant::L, 7));
}

TEST(Config, Overrides) {
  const ModelSpec s = parse_config(R"({"variant": "B", "shrink_ratio": 0.5, "norm_act": "ln_gelu",
                                        "attn_scale_mode": "linear", "sr_ratios": [8, 4, 2, 1]})");
  EXPECT_EQ(s.shrink_ratio, 0.5);
  EXPECT_EQ(s.norm, NormKind::LayerNorm);
  EXPECT_EQ(s.act, ActKind::GELU);
  EXPECT_EQ(s.attn_scale_mode, AttnScaleMode::Linear);
  EXPECT_EQ(s.ntb(2, 4).split().high, 256);
  const ModelSpec p = parse_config(R"({"pattern": "C C C T"})");
  EXPECT_EQ(p, build_hybrid(HybridPattern::parse("CCCT")));
  const ModelSpec q = parse_config(R"({"pattern": {"letters": "CHHH", "N": [1, 1, 1, 1], "L": [1, 1, 1, 1]}})");
  EXPECT_EQ(q.block_count(), 1 + 2 + 2 + 2);
}

TEST(Config, Errors) {
  EXPECT_EQ(kind_of([] { (void)parse_config(R"({"variant": "S", "colour": 1})"); }), ErrorKind::UnknownKey);
  EXPECT_EQ(kind_of([] { (void)parse_config(R"({"pattern": {"letters": "CHHH", "M": 1}})"); }),
            ErrorKind::UnknownKey);
  EXPECT_EQ(kind_of([] { (void)parse_config(R"({"num_classes": "ten"})"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { (void)parse_config(R"({"variant": "S", "stages": []})"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { (void)parse_config(R"({"norm_act": "gn_relu"})"); }), ErrorKind::ParseError);
  try {
    (void)parse_config("{\n  \"variant\": \"S\",\n  oops\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ConfigProperty, RenderThenParseIsIdentity) {
  for (int i = 0; i < 20; ++i) {
    gen::Gen g(5300 + i);
    HybridPattern p;
    for (auto& c : p.letters) c = g.pick<char>({'C', 'T', 'H'});
    for (auto& n : p.n) n = g.range(1, 3);
    for (auto& l : p.l) l = g.range(1, 2);
    ModelSpec s = build_hybrid(p, default_widths(), g.range(1, 50));
    s.norm = g.pick<NormKind>({NormKind::BatchNorm, NormKind::LayerNorm, NormKind::Identity});
    s.act = g.coin() ? ActKind::ReLU : ActKind::GELU;
    s.shrink_ratio = g.pick<double>({0.0, 0.25, 0.5, 0.75, 1.0});
    const std::string text = render_config(s);
    EXPECT_EQ(parse_config(text), s) << text;
    EXPECT_EQ(render_config(parse_config(text)), text);
  }
}

TEST(Bench, StatisticsHelpers) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 95), 10.0);
  EXPECT_DOUBLE_EQ(percentile({5}, 95), 5.0);
  EXPECT_THROW(median({}), Error);
}

TEST(BenchProperty, MedianLiesBetweenExtremesAndBelowP95) {
  for (int i = 0; i < 50; ++i) {
    gen::Gen g(5400 + i);
    std::vector<double> v(static_cast<std::size_t>(g.range(1, 30)));
    for (auto& x : v) x = g.rng.uniform(0.1, 9.0);
    const double m = median(v);
    EXPECT_LE(*std::min_element(v.begin(), v.end()), m);
    EXPECT_GE(*std::max_element(v.begin(), v.end()), m);
    EXPECT_LE(m, percentile(v, 95));
  }
}

TEST(Bench, PerBlockRowsCoverEveryTarget) {
  const ModelSpec s = verify::tiny_model_spec();
  const ParamSet p = init_params(s, 1);
  BenchOptions o;
  o.height = o.width = 32;
  o.warmup = 0;
  o.iters = 2;
  o.per_block = true;
  const BenchReport r = bench_run(s, p, o);
  ASSERT_EQ(static_cast<std::int64_t>(r.rows.size()), 1 + 1 + s.block_count() + 1);
  EXPECT_EQ(r.rows[0].target, "model");
  EXPECT_EQ(r.rows[1].target, "stem");
  EXPECT_EQ(r.rows[2].target, "stages.0.blocks.0");
  EXPECT_EQ(r.rows.back().target, "head");
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.samples_ms.size(), 2u);
    EXPECT_LE(row.median_ms, row.p95_ms);
  }
  const std::string csv = bench_csv(r);
  EXPECT_EQ(csv.rfind("# threads=1 conv_algo=im2col clock=steady\ntarget,batch,height,width,warmup,iters,median_ms,p95_ms\n", 0), 0u);
  o.iters = 0;
  EXPECT_THROW(bench_run(s, p, o), Error);
}
