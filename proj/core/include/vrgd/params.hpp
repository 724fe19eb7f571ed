#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vrgd {

/// Dense per-parameter field: gradients, GSNR values, optimizer moments.
using Field = std::vector<double>;

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const Segment&) const = default;
};

/// Ordered, contiguous split of a flat parameter array into named layers.
class LayerPartition {
 public:
  LayerPartition() = default;

  /// Throws StructuralError unless the segments tile [0, total) in order with
  /// unique names and non-zero lengths.
  explicit LayerPartition(std::vector<Segment> segments);

  /// Builds contiguous segments from (name, length) pairs.
  static LayerPartition from_lengths(
      const std::vector<std::pair<std::string, std::size_t>>& layers);

  /// A single segment covering all parameters.
  static LayerPartition single(std::string name, std::size_t length);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t size() const noexcept { return segments_.size(); }
  std::size_t total() const noexcept { return total_; }

  /// Index of the segment containing parameter `index`.
  std::size_t layer_of(std::size_t index) const;

  bool operator==(const LayerPartition&) const = default;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

struct InitSpec {
  enum class Kind { kZeros, kConstant, kUniform };

  Kind kind = Kind::kZeros;
  double value = 0.0;  // kConstant
  double scale = 0.0;  // kUniform draws from [-scale, scale]
  std::uint64_t seed = 0;

  static InitSpec zeros() { return {}; }
  static InitSpec constant(double v) { return {Kind::kConstant, v, 0.0, 0}; }
  static InitSpec uniform(double a, std::uint64_t seed) {
    return {Kind::kUniform, 0.0, a, seed};
  }
};

struct ParamVector {
  Field values;
  LayerPartition partition;

  std::size_t size() const noexcept { return values.size(); }
};

ParamVector make_params(const LayerPartition& partition, const InitSpec& init);

struct LayerSlice {
  std::string_view name;
  std::span<const double> values;
};

/// Contiguous per-layer views of `v`, in partition order.
std::vector<LayerSlice> layer_slices(std::span<const double> v,
                                     const LayerPartition& partition);

Field flatten(const std::vector<LayerSlice>& slices);

/// Throws StructuralError when `v.size()` differs from the partition total.
void require_length(std::span<const double> v, const LayerPartition& partition,
                    std::string_view what);

bool all_finite(std::span<const double> v) noexcept;

}  // namespace vrgd
