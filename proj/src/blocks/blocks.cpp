#include "nextvit/blocks.hpp"

#include <cmath>
#include <algorithm>

#include "nextvit/exec.hpp"

namespace nextvit {

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::BatchNorm:
      return "bn";
    case NormKind::LayerNorm:
      return "ln";
    case NormKind::Identity:
      return "id";
  }
  return "?";
}

std::string to_string(ActKind k) { return k == ActKind::ReLU ? "relu" : "gelu"; }

std::string to_string(AttnScaleMode m) { return m == AttnScaleMode::Sqrt ? "sqrt" : "linear"; }

namespace {

void check_heads(std::int64_t channels, std::int64_t head_dim, const char* what) {
  if (head_dim <= 0 || channels <= 0 || channels % head_dim != 0) {
    fail(ErrorKind::HeadMismatch, std::string(what) + " channels " + std::to_string(channels) +
                                      " not a positive multiple of head_dim " + std::to_string(head_dim));
  }
}

std::int64_t hidden_width(std::int64_t channels, double ratio) {
  const auto h = static_cast<std::int64_t>(std::floor(static_cast<double>(channels) * ratio + 0.5));
  if (h < 1) fail(ErrorKind::InvalidArgument, "mlp hidden width must be >= 1");
  return h;
}

}  // namespace

void MHCASpec::validate() const { check_heads(channels, head_dim, "mhca"); }

std::int64_t NCBSpec::hidden() const { return hidden_width(out_channels, mlp_ratio); }

void NCBSpec::validate() const {
  if (in_channels <= 0) fail(ErrorKind::InvalidArgument, "ncb in_channels must be positive");
  mhca().validate();
  (void)hidden();
}

double EMHSASpec::scale() const {
  const auto d = static_cast<double>(head_dim);
  return scale_mode == AttnScaleMode::Sqrt ? 1.0 / std::sqrt(d) : 1.0 / d;
}

void EMHSASpec::validate() const {
  check_heads(channels, head_dim, "emhsa");
  if (sr_ratio < 1) fail(ErrorKind::InvalidArgument, "sr_ratio must be >= 1");
}

BranchSplit split_branches(std::int64_t out_channels, double shrink_ratio, std::int64_t head_dim) {
  if (!(shrink_ratio >= 0.0 && shrink_ratio <= 1.0)) {
    fail(ErrorKind::InvalidRatio, "shrink ratio " + std::to_string(shrink_ratio) + " outside [0, 1]");
  }
  if (head_dim <= 0) fail(ErrorKind::InvalidRatio, "head_dim must be positive");
  auto high = static_cast<std::int64_t>(std::floor(shrink_ratio * static_cast<double>(out_channels) + 0.5));
  const std::int64_t rem = high % head_dim;
  high = 2 * rem >= head_dim ? high - rem + head_dim : high - rem;
  high = std::clamp<std::int64_t>(high, 0, out_channels);
  const BranchSplit s{high, out_channels - high};
  if (s.high % head_dim != 0 || s.low % head_dim != 0) {
    fail(ErrorKind::InvalidRatio, "branch widths " + std::to_string(s.high) + "/" + std::to_string(s.low) +
                                      " not multiples of head_dim " + std::to_string(head_dim));
  }
  return s;
}

std::int64_t NTBSpec::hidden() const { return hidden_width(out_channels, mlp_ratio); }

void NTBSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) fail(ErrorKind::InvalidArgument, "ntb channels must be positive");
  const BranchSplit s = split();
  if (s.high > 0) emhsa().validate();
  if (s.low > 0) mhca().validate();
  (void)hidden();
}

namespace {

template <typename T, typename F>
BasicTensor<T> run_eager(const ParamSet& params, std::string_view prefix, F&& body) {
  EagerExec<T> ex(params);
  if (prefix.empty()) return body(ex);
  auto guard = ex.scope(prefix);
  return body(ex);
}

}  // namespace

#define NEXTVIT_BLOCK_ENTRY(T, name, Spec, fn)                                                      \
  BasicTensor<T> name(const BasicTensor<T>& x, const Spec& spec, const ParamSet& params,           \
                      std::string_view prefix) {                                                   \
    return run_eager<T>(params, prefix, [&](EagerExec<T>& ex) { return fn(ex, x, spec); });         \
  }

NEXTVIT_BLOCK_ENTRY(float, mhca_forward, MHCASpec, mhca)
NEXTVIT_BLOCK_ENTRY(double, mhca_forward, MHCASpec, mhca)
NEXTVIT_BLOCK_ENTRY(float, ncb_forward, NCBSpec, ncb)
NEXTVIT_BLOCK_ENTRY(double, ncb_forward, NCBSpec, ncb)
NEXTVIT_BLOCK_ENTRY(float, emhsa_forward, EMHSASpec, emhsa)
NEXTVIT_BLOCK_ENTRY(double, emhsa_forward, EMHSASpec, emhsa)
NEXTVIT_BLOCK_ENTRY(float, ntb_forward, NTBSpec, ntb)
NEXTVIT_BLOCK_ENTRY(double, ntb_forward, NTBSpec, ntb)

#undef NEXTVIT_BLOCK_ENTRY

}  // namespace nextvit
