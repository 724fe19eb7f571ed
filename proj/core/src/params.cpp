#include "vrgd/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "vrgd/errors.hpp"

namespace vrgd {

LayerPartition::LayerPartition(std::vector<Segment> segments)
    : segments_(std::move(segments)) {
  std::set<std::string_view> names;
  std::size_t expected = 0;
  for (const auto& s : segments_) {
    if (s.length == 0) {
      throw StructuralError("layer '" + s.name + "' has zero length");
    }
    if (s.offset != expected) {
      throw StructuralError("layer '" + s.name + "' starts at " +
                            std::to_string(s.offset) + ", expected " +
                            std::to_string(expected) + " (gap or overlap)");
    }
    if (!names.insert(s.name).second) {
      throw StructuralError("duplicate layer name '" + s.name + "'");
    }
    expected += s.length;
  }
  total_ = expected;
}

LayerPartition LayerPartition::from_lengths(
    const std::vector<std::pair<std::string, std::size_t>>& layers) {
  std::vector<Segment> segments;
  segments.reserve(layers.size());
  std::size_t offset = 0;
  for (const auto& [name, length] : layers) {
    segments.push_back({name, offset, length});
    offset += length;
  }
  return LayerPartition(std::move(segments));
}

LayerPartition LayerPartition::single(std::string name, std::size_t length) {
  return LayerPartition({{std::move(name), 0, length}});
}

std::size_t LayerPartition::layer_of(std::size_t index) const {
  if (index >= total_) {
    throw RangeError("parameter index " + std::to_string(index) +
                     " outside partition of size " + std::to_string(total_));
  }
  auto it = std::upper_bound(
      segments_.begin(), segments_.end(), index,
      [](std::size_t i, const Segment& s) { return i < s.offset; });
  return static_cast<std::size_t>(std::distance(segments_.begin(), it)) - 1;
}

ParamVector make_params(const LayerPartition& partition, const InitSpec& init) {
  if (partition.size() == 0) {
    throw StructuralError("cannot create parameters for an empty partition");
  }
  ParamVector p{Field(partition.total(), 0.0), partition};
  switch (init.kind) {
    case InitSpec::Kind::kZeros:
      break;
    case InitSpec::Kind::kConstant:
      std::fill(p.values.begin(), p.values.end(), init.value);
      break;
    case InitSpec::Kind::kUniform: {
      if (!(init.scale >= 0.0)) {
        throw ConfigError("uniform init scale must be non-negative");
      }
      std::mt19937_64 rng(init.seed);
      std::uniform_real_distribution<double> dist(-init.scale, init.scale);
      for (auto& v : p.values) v = dist(rng);
      break;
    }
  }
  return p;
}

void require_length(std::span<const double> v, const LayerPartition& partition,
                    std::string_view what) {
  if (v.size() != partition.total()) {
    throw StructuralError(std::string(what) + " has length " +
                          std::to_string(v.size()) + " but partition covers " +
                          std::to_string(partition.total()));
  }
}

std::vector<LayerSlice> layer_slices(std::span<const double> v,
                                     const LayerPartition& partition) {
  require_length(v, partition, "view");
  std::vector<LayerSlice> out;
  out.reserve(partition.size());
  for (const auto& s : partition.segments()) {
    out.push_back({s.name, v.subspan(s.offset, s.length)});
  }
  return out;
}

Field flatten(const std::vector<LayerSlice>& slices) {
  Field out;
  for (const auto& s : slices) {
    out.insert(out.end(), s.values.begin(), s.values.end());
  }
  return out;
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace vrgd
