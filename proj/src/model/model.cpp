#include "nextvit/model.hpp"

#include <algorithm>
#include <cctype>

namespace nextvit {

std::int64_t StageSpec::count(BlockType t) const {
  return std::count_if(blocks.begin(), blocks.end(), [t](const BlockSpec& b) { return b.type == t; });
}

NCBSpec ModelSpec::ncb(std::size_t stage, std::size_t block) const {
  const BlockSpec& b = stages.at(stage).blocks.at(block);
  return {b.in_channels, b.out_channels, head_dim, ncb_mlp_ratio, norm, act};
}

NTBSpec ModelSpec::ntb(std::size_t stage, std::size_t block) const {
  const BlockSpec& b = stages.at(stage).blocks.at(block);
  return {b.in_channels, b.out_channels,  head_dim, stages.at(stage).sr_ratio, shrink_ratio,
          ntb_mlp_ratio, norm,           act,      attn_scale_mode};
}

std::int64_t ModelSpec::block_count() const {
  std::int64_t n = 0;
  for (const auto& s : stages) n += static_cast<std::int64_t>(s.blocks.size());
  return n;
}

std::int64_t ModelSpec::reduction() const {
  std::int64_t r = 1;
  for (int s : stem.strides) r *= s;
  for (const auto& st : stages) r *= st.embed.downsample ? 2 : 1;
  return r;
}

void ModelSpec::validate() const {
  if (in_channels < 1) fail(ErrorKind::InvalidArgument, "in_channels must be positive");
  if (stem.channels.size() != stem.strides.size() || stem.channels.empty()) {
    fail(ErrorKind::InvalidArgument, "stem channels and strides must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < stem.channels.size(); ++i) {
    if (stem.channels[i] < 1 || stem.strides[i] < 1) fail(ErrorKind::InvalidArgument, "invalid stem layer");
  }
  if (stages.empty()) fail(ErrorKind::InvalidArgument, "model has no stages");
  if (num_classes < 1) fail(ErrorKind::InvalidArgument, "num_classes must be positive");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    if (st.embed.out_channels < 1) fail(ErrorKind::InvalidArgument, "stage embed width must be positive");
    if (st.sr_ratio < 1) fail(ErrorKind::InvalidArgument, "sr_ratio must be >= 1");
    std::int64_t prev = st.embed.out_channels;
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      const BlockSpec& blk = st.blocks[b];
      const std::string where = "stages." + std::to_string(s) + ".blocks." + std::to_string(b);
      if (blk.in_channels != prev) {
        fail(ErrorKind::ShapeMismatch, where + " expects " + std::to_string(blk.in_channels) +
                                           " input channels, predecessor gives " + std::to_string(prev));
      }
      if (blk.type == BlockType::NCB) {
        ncb(s, b).validate();
      } else {
        ntb(s, b).validate();
      }
      prev = blk.out_channels;
    }
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::S:
      return "S";
    case Variant::B:
      return "B";
    case Variant::L:
      return "L";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(name[0]))) {
      case 'S':
        return Variant::S;
      case 'B':
        return Variant::B;
      case 'L':
        return Variant::L;
      default:
        break;
    }
  }
  fail(ErrorKind::InvalidArgument, "unknown variant '" + std::string(name) + "' (expected S, B or L)");
}

HybridPattern HybridPattern::parse(std::string_view letters) {
  HybridPattern p;
  std::size_t i = 0;
  for (char ch : letters) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (up != 'C' && up != 'T' && up != 'H') {
      fail(ErrorKind::InvalidPattern, "invalid stage letter '" + std::string(1, ch) + "' in \"" +
                                          std::string(letters) + "\"");
    }
    if (i >= 4) fail(ErrorKind::InvalidPattern, "pattern \"" + std::string(letters) + "\" has more than 4 stages");
    p.letters[i++] = up;
  }
  if (i != 4) fail(ErrorKind::InvalidPattern, "pattern \"" + std::string(letters) + "\" needs exactly 4 stages");
  return p;
}

HybridPattern HybridPattern::for_variant(Variant v) {
  HybridPattern p;
  p.l[2] = v == Variant::S ? 2 : v == Variant::B ? 4 : 6;
  return p;
}

std::string HybridPattern::str() const {
  std::string out;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i) out += ' ';
    out += letters[i];
  }
  return out;
}

std::array<StageWidths, 4> default_widths() { return {{{96, 128}, {192, 256}, {384, 512}, {768, 1024}}}; }

ModelSpec build_hybrid(const HybridPattern& pattern, const std::array<StageWidths, 4>& widths,
                       std::int64_t num_classes) {
  static constexpr std::array<std::int64_t, 4> kSr{8, 4, 2, 1};
  ModelSpec spec;
  spec.num_classes = num_classes;
  for (std::size_t s = 0; s < 4; ++s) {
    const char letter = pattern.letters[s];
    const std::int64_t n = pattern.n[s];
    const std::int64_t l = pattern.l[s];
    if (n < 1 || l < 1) {
      fail(ErrorKind::InvalidPattern, "stage " + std::to_string(s) + " depths N=" + std::to_string(n) +
                                          " L=" + std::to_string(l) + " must be >= 1");
    }
    StageSpec st;
    st.embed = {s > 0, widths[s].ncb};
    st.sr_ratio = kSr[s];
    std::int64_t prev = widths[s].ncb;
    auto push = [&](BlockType t, std::int64_t out) {
      st.blocks.push_back({t, prev, out});
      prev = out;
    };
    switch (letter) {
      case 'C':
        for (std::int64_t i = 0; i < n * l; ++i) push(BlockType::NCB, widths[s].ncb);
        break;
      case 'T':
        for (std::int64_t i = 0; i < (n + 1) * l; ++i) push(BlockType::NTB, widths[s].ntb);
        break;
      case 'H':
        for (std::int64_t g = 0; g < l; ++g) {
          for (std::int64_t i = 0; i < n; ++i) push(BlockType::NCB, widths[s].ncb);
          push(BlockType::NTB, widths[s].ntb);
        }
        break;
      default:
        fail(ErrorKind::InvalidPattern, "invalid stage letter '" + std::string(1, letter) + "'");
    }
    spec.stages.push_back(std::move(st));
  }
  spec.validate();
  return spec;
}

ModelSpec build_variant(Variant v, std::int64_t num_classes) {
  return build_hybrid(HybridPattern::for_variant(v), default_widths(), num_classes);
}

Graph trace_graph(const ModelSpec& spec, std::int64_t height, std::int64_t width, std::int64_t batch) {
  spec.validate();
  const Shape in{batch, spec.in_channels, height, width};
  check_input(spec, in);
  GraphExec ex;
  auto x = ex.input(in);
  auto y = model_forward(ex, spec, x);
  return ex.take(y);
}

std::vector<ParamDecl> model_params(const ModelSpec& spec) {
  const std::int64_t r = spec.reduction();
  return trace_graph(spec, r, r).params();
}

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) { return init_from_decls(model_params(spec), seed); }

void check_input(const ModelSpec& spec, const Shape& x) {
  const std::int64_t r = spec.reduction();
  if (x.n < 1 || x.c != spec.in_channels || x.h < r || x.w < r || x.h % r != 0 || x.w % r != 0) {
    fail(ErrorKind::ShapeMismatch, "input " + x.str() + " must be (n>=1, " + std::to_string(spec.in_channels) +
                                       ", H, W) with H and W positive multiples of " + std::to_string(r));
  }
}

namespace {

template <typename T>
BasicMatrix<T> run_forward(const ModelSpec& spec, const ParamSet& params, const BasicTensor<T>& x,
                           const ForwardOptions& opts) {
  check_input(spec, x.shape());
  EagerExec<T> ex(params, opts.algo);
  ex.set_observer(opts.observer);
  const BasicTensor<T> y = model_forward(ex, spec, x, opts.stage_trace);
  return BasicMatrix<T>(y.shape().n, y.shape().c, std::vector<T>(y.data().begin(), y.data().end()));
}

}  // namespace

Matrix forward(const ModelSpec& spec, const ParamSet& params, const Tensor& x, const ForwardOptions& opts) {
  return run_forward(spec, params, x, opts);
}

MatrixD forward(const ModelSpec& spec, const ParamSet& params, const TensorD& x, const ForwardOptions& opts) {
  return run_forward(spec, params, x, opts);
}

template <typename T>
std::vector<std::int64_t> argmax_rows(const BasicMatrix<T>& m) {
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out.push_back(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

template std::vector<std::int64_t> argmax_rows(const BasicMatrix<float>&);
template std::vector<std::int64_t> argmax_rows(const BasicMatrix<double>&);

}  // namespace nextvit
