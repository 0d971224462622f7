#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace nextvit {

/// One learnable (or statistics) array stored in single precision.
struct ParamArray {
  std::vector<std::int64_t> dims;
  std::vector<float> data;

  ParamArray() = default;
  ParamArray(std::vector<std::int64_t> dims_, std::vector<float> data_);
  explicit ParamArray(std::vector<std::int64_t> dims_, float fill = 0.0f);

  std::int64_t numel() const noexcept;
  bool operator==(const ParamArray&) const = default;
};

std::int64_t product(std::span<const std::int64_t> dims) noexcept;
std::string dims_str(std::span<const std::int64_t> dims);

/// Named arrays addressed by hierarchical dotted keys, e.g.
/// "stages.2.blocks.4.mhca.group_conv.weight". Iteration is in key order.
class ParamSet {
 public:
  using Map = std::map<std::string, ParamArray, std::less<>>;

  /// Throws DuplicateName if the key already exists.
  void insert(std::string name, ParamArray array);
  void insert_or_assign(std::string name, ParamArray array);
  bool erase(std::string_view name);

  bool contains(std::string_view name) const;
  /// Throws MissingParam when absent.
  const ParamArray& at(std::string_view name) const;
  ParamArray& at(std::string_view name);
  const ParamArray* find(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  Map::const_iterator begin() const noexcept { return entries_.begin(); }
  Map::const_iterator end() const noexcept { return entries_.end(); }

  /// Total scalar count over all arrays.
  std::int64_t scalar_count() const noexcept;
  /// FNV-1a over names, dims and raw float bits.
  std::uint64_t checksum() const noexcept;

  bool operator==(const ParamSet&) const = default;

 private:
  Map entries_;
};

}  // namespace nextvit
