#pragma once

// Simulated data-parallel gradient statistics. A global batch is split across
// k virtual devices; each device averages its shard's gradients, and the
// device means are reduced into a mean, a squared mean and their variance.
// From those the per-parameter gradient signal-to-noise ratio is formed,
// normalized to unit mean within every layer and clamped to [gamma, 1].

#include <cstddef>
#include <span>
#include <vector>

#include "vrgd/models.hpp"
#include "vrgd/params.hpp"

namespace vrgd {

inline constexpr double kDefaultGsnrEps = 1e-12;
/// Layers whose raw GSNR mean does not exceed this fall back to all ones.
inline constexpr double kLayerMeanFloor = 1e-30;

class ShardPlan {
 public:
  ShardPlan(std::vector<std::size_t> batch, std::size_t k);

  std::size_t devices() const noexcept { return k_; }
  std::size_t per_device() const noexcept { return per_device_; }
  std::size_t global_batch() const noexcept { return batch_.size(); }

  /// Sample indices owned by device `d`.
  std::span<const std::size_t> shard(std::size_t d) const;

 private:
  std::vector<std::size_t> batch_;
  std::size_t k_;
  std::size_t per_device_;
};

/// Contiguous equal shards in device order. Throws ConfigError when k < 2 or
/// the batch size is not a multiple of k.
ShardPlan shard_batch(std::vector<std::size_t> batch_indices, std::size_t k);

struct DeviceGradStats {
  std::vector<Field> per_device_means;
  Field mean;
  Field sq_mean;
  Field variance;
  Field gsnr_raw;
  Field gsnr_normalized;  // after per-layer normalization, before the clamp
  Field gsnr;             // normalized and clamped
  double mean_loss = 0.0; // average of the per-device batch losses
};

/// One gradient mean per device. Throws NumericError naming the first layer
/// with a non-finite entry.
std::vector<Field> device_grad_means(const Model& model,
                                     std::span<const double> params,
                                     const ShardPlan& plan, const Dataset& data,
                                     double* mean_loss = nullptr);

struct ReducedStats {
  Field mean;
  Field sq_mean;
  Field variance;  // sq_mean - mean^2, clamped at 0
};

/// Sums g and g^2 in ascending device order. The sums are carried in
/// double-double precision, so `variance` stays accurate even when it is tiny
/// next to sq_mean.
ReducedStats reduce_stats(const std::vector<Field>& per_device);

/// max(sq_mean - mean^2, 0) in plain double arithmetic.
Field variance(std::span<const double> mean, std::span<const double> sq_mean);

/// mean^2 / (var + eps).
Field gsnr_raw(std::span<const double> mean, std::span<const double> var,
               double eps = kDefaultGsnrEps);

Field normalize_per_layer(std::span<const double> r,
                          const LayerPartition& partition,
                          double floor = kLayerMeanFloor);

/// Clamps into [gamma, 1]; gamma must lie in (0, 1].
Field clamp_gsnr(std::span<const double> r, double gamma);

/// The full chain: device means, reduce, variance, raw GSNR, normalize, clamp.
DeviceGradStats compute_gsnr_field(const Model& model,
                                   std::span<const double> params,
                                   const ShardPlan& plan, const Dataset& data,
                                   const LayerPartition& partition,
                                   double gamma, double eps = kDefaultGsnrEps);

/// The same chain starting from already computed device means.
DeviceGradStats gsnr_from_device_means(std::vector<Field> per_device,
                                       const LayerPartition& partition,
                                       double gamma,
                                       double eps = kDefaultGsnrEps);

}  // namespace vrgd
