#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "nextvit/io.hpp"

namespace nextvit {

namespace {

constexpr char kMagic[4] = {'N', 'V', 'T', 'W'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t pos() const noexcept { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      fail(ErrorKind::TruncatedFile, std::string("file ends inside ") + what + " at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const ParamSet& params) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kWeightVersion));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, array] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      fail(ErrorKind::InvalidArgument, "parameter name too long: " + name.substr(0, 64) + "...");
    }
    if (array.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
      fail(ErrorKind::InvalidArgument, "too many dims for " + name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(0);
    out.push_back(static_cast<char>(array.dims.size()));
    for (auto d : array.dims) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : array.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ParamSet decode_weights(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) fail(ErrorKind::BadMagic, "not an NVTW weight file");
  const auto version = r.get<std::uint8_t>("version");
  if (version != kWeightVersion) fail(ErrorKind::BadVersion, "unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("entry count");
  ParamSet out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.get<std::uint16_t>("name length");
    std::string name(r.take(name_len, "name"));
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != 0) fail(ErrorKind::DtypeUnsupported, name + ": dtype " + std::to_string(dtype));
    const auto ndim = r.get<std::uint8_t>("ndim");
    std::vector<std::int64_t> dims;
    std::uint64_t numel = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
      dims.push_back(r.get<std::uint32_t>("dims"));
      numel *= static_cast<std::uint64_t>(dims.back());
      if (numel > r.remaining()) fail(ErrorKind::TruncatedFile, name + ": declared size exceeds file");
    }
    if (numel * 4 > r.remaining()) fail(ErrorKind::TruncatedFile, name + ": declared size exceeds file");
    std::vector<float> data(static_cast<std::size_t>(numel));
    for (auto& v : data) v = std::bit_cast<float>(r.get<std::uint32_t>("data"));
    if (out.contains(name)) fail(ErrorKind::DuplicateName, "duplicate entry " + name);
    out.insert(std::move(name), ParamArray(std::move(dims), std::move(data)));
  }
  if (r.remaining() != 0) {
    fail(ErrorKind::TrailingData, std::to_string(r.remaining()) + " bytes after the last entry");
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

void save_weights(const ParamSet& params, const std::filesystem::path& path) {
  write_file(path, encode_weights(params));
}

ParamSet load_weights(const std::filesystem::path& path) { return decode_weights(read_file(path)); }

void save_input(const Tensor& x, const std::filesystem::path& path) {
  const Shape& s = x.shape();
  ParamSet p;
  p.insert("input", ParamArray({s.n, s.c, s.h, s.w}, std::vector<float>(x.data().begin(), x.data().end())));
  save_weights(p, path);
}

Tensor load_input(const std::filesystem::path& path) {
  ParamSet p = load_weights(path);
  if (p.size() != 1 || !p.contains("input")) {
    fail(ErrorKind::InvalidArgument, path.string() + " must hold exactly one entry named \"input\"");
  }
  const ParamArray& a = p.at("input");
  if (a.dims.size() != 4) fail(ErrorKind::ShapeMismatch, "input must be 4-d, got " + dims_str(a.dims));
  return Tensor(Shape{a.dims[0], a.dims[1], a.dims[2], a.dims[3]}, a.data);
}

}  // namespace nextvit
