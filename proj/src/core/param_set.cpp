#include "nextvit/param_set.hpp"

#include <bit>
#include <numeric>
#include <sstream>

#include "nextvit/error.hpp"
#include "nextvit/rng.hpp"

namespace nextvit {

std::int64_t product(std::span<const std::int64_t> dims) noexcept {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
}

std::string dims_str(std::span<const std::int64_t> dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

ParamArray::ParamArray(std::vector<std::int64_t> dims_, std::vector<float> data_)
    : dims(std::move(dims_)), data(std::move(data_)) {
  if (product(dims) != static_cast<std::int64_t>(data.size())) {
    fail(ErrorKind::ShapeMismatch,
         "param dims " + dims_str(dims) + " do not match " + std::to_string(data.size()) + " values");
  }
}

ParamArray::ParamArray(std::vector<std::int64_t> dims_, float fill)
    : dims(std::move(dims_)), data(static_cast<std::size_t>(product(dims)), fill) {}

std::int64_t ParamArray::numel() const noexcept { return static_cast<std::int64_t>(data.size()); }

void ParamSet::insert(std::string name, ParamArray array) {
  auto [it, inserted] = entries_.try_emplace(std::move(name), std::move(array));
  if (!inserted) fail(ErrorKind::DuplicateName, "duplicate parameter '" + it->first + "'");
}

void ParamSet::insert_or_assign(std::string name, ParamArray array) {
  entries_.insert_or_assign(std::move(name), std::move(array));
}

bool ParamSet::erase(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

bool ParamSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const ParamArray& ParamSet::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::MissingParam, "no parameter '" + std::string(name) + "'");
  return it->second;
}

ParamArray& ParamSet::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::MissingParam, "no parameter '" + std::string(name) + "'");
  return it->second;
}

const ParamArray* ParamSet::find(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

std::int64_t ParamSet::scalar_count() const noexcept {
  std::int64_t total = 0;
  for (const auto& [_, arr] : entries_) total += arr.numel();
  return total;
}

std::uint64_t ParamSet::checksum() const noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& [name, arr] : entries_) {
    h = fnv1a(name, h);
    for (auto d : arr.dims) {
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&d), sizeof d), h);
    }
    for (float v : arr.data) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&bits), sizeof bits), h);
    }
  }
  return h;
}

}  // namespace nextvit
