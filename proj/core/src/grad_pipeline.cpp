#include "vrgd/grad_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vrgd/errors.hpp"

namespace vrgd {

ShardPlan::ShardPlan(std::vector<std::size_t> batch, std::size_t k)
    : batch_(std::move(batch)), k_(k), per_device_(0) {
  if (k_ < 2) {
    throw ConfigError("device count k must be >= 2, got " + std::to_string(k_));
  }
  if (batch_.empty() || batch_.size() % k_ != 0) {
    throw ConfigError("global batch of " + std::to_string(batch_.size()) +
                      " samples is not divisible by k=" + std::to_string(k_));
  }
  per_device_ = batch_.size() / k_;
}

std::span<const std::size_t> ShardPlan::shard(std::size_t d) const {
  if (d >= k_) throw RangeError("device index out of range");
  return std::span<const std::size_t>(batch_).subspan(d * per_device_, per_device_);
}

ShardPlan shard_batch(std::vector<std::size_t> batch_indices, std::size_t k) {
  return ShardPlan(std::move(batch_indices), k);
}

std::vector<Field> device_grad_means(const Model& model,
                                     std::span<const double> params,
                                     const ShardPlan& plan, const Dataset& data,
                                     double* mean_loss) {
  const auto& partition = model.partition();
  std::vector<Field> out(plan.devices());
  double loss_sum = 0.0;
  for (std::size_t d = 0; d < plan.devices(); ++d) {
    loss_sum += model.loss_grad(params, data, plan.shard(d), out[d]);
    const auto& g = out[d];
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        const auto& seg = partition.segments()[partition.layer_of(j)];
        throw NumericError("non-finite gradient on device " + std::to_string(d),
                           seg.name);
      }
    }
  }
  if (mean_loss) *mean_loss = loss_sum / static_cast<double>(plan.devices());
  return out;
}

namespace {

// Unevaluated sum hi + lo carrying roughly twice the precision of a double.
struct DoubleDouble {
  double hi = 0.0;
  double lo = 0.0;
};

// Error-free transformation: a + b == s + err exactly.
inline void two_sum(double a, double b, double& s, double& err) {
  s = a + b;
  const double bb = s - a;
  err = (a - (s - bb)) + (b - bb);
}

inline void add(DoubleDouble& acc, double x) {
  double s, e;
  two_sum(acc.hi, x, s, e);
  acc.hi = s;
  acc.lo += e;
}

inline void add_square(DoubleDouble& acc, double x) {
  const double p = x * x;
  const double pe = std::fma(x, x, -p);
  add(acc, p);
  acc.lo += pe;
}

// k * var = S2 - S1^2 / k, evaluated in double-double so the cancellation
// between the two terms does not eat the result.
double compensated_variance(const DoubleDouble& s1, const DoubleDouble& s2, double k) {
  const double sq = s1.hi * s1.hi;
  const double sq_lo = std::fma(s1.hi, s1.hi, -sq) + 2.0 * s1.hi * s1.lo;
  const double q = sq / k;
  const double q_lo = (std::fma(-q, k, sq) + sq_lo) / k;
  double d, de;
  two_sum(s2.hi, -q, d, de);
  const double v = (d + (de + s2.lo - q_lo)) / k;
  return std::max(v, 0.0);
}

}  // namespace

ReducedStats reduce_stats(const std::vector<Field>& per_device) {
  if (per_device.size() < 2) {
    throw StructuralError("reduce_stats needs at least two devices");
  }
  const std::size_t n = per_device.front().size();
  for (const auto& g : per_device) {
    if (g.size() != n) throw StructuralError("device views differ in length");
  }
  std::vector<DoubleDouble> s1(n), s2(n);
  for (const auto& g : per_device) {
    for (std::size_t j = 0; j < n; ++j) {
      add(s1[j], g[j]);
      add_square(s2[j], g[j]);
    }
  }
  const double k = static_cast<double>(per_device.size());
  ReducedStats out{Field(n), Field(n), Field(n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.mean[j] = (s1[j].hi + s1[j].lo) / k;
    out.sq_mean[j] = (s2[j].hi + s2[j].lo) / k;
    out.variance[j] = compensated_variance(s1[j], s2[j], k);
  }
  return out;
}

Field variance(std::span<const double> mean, std::span<const double> sq_mean) {
  if (mean.size() != sq_mean.size()) {
    throw StructuralError("mean and squared mean differ in length");
  }
  Field out(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    out[j] = std::max(sq_mean[j] - mean[j] * mean[j], 0.0);
  }
  return out;
}

Field gsnr_raw(std::span<const double> mean, std::span<const double> var,
               double eps) {
  if (!(eps > 0.0)) throw ConfigError("GSNR eps must be positive");
  if (mean.size() != var.size()) {
    throw StructuralError("mean and variance differ in length");
  }
  Field out(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    out[j] = mean[j] * mean[j] / (var[j] + eps);
  }
  return out;
}

Field normalize_per_layer(std::span<const double> r,
                          const LayerPartition& partition, double floor) {
  require_length(r, partition, "GSNR field");
  Field out(r.size());
  for (const auto& seg : partition.segments()) {
    double sum = 0.0;
    for (std::size_t j = seg.offset; j < seg.offset + seg.length; ++j) sum += r[j];
    const double layer_mean = sum / static_cast<double>(seg.length);
    for (std::size_t j = seg.offset; j < seg.offset + seg.length; ++j) {
      out[j] = layer_mean > floor ? r[j] / layer_mean : 1.0;
    }
  }
  return out;
}

Field clamp_gsnr(std::span<const double> r, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
  Field out(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    out[j] = r[j] < gamma ? gamma : (r[j] > 1.0 ? 1.0 : r[j]);
  }
  return out;
}

DeviceGradStats gsnr_from_device_means(std::vector<Field> per_device,
                                       const LayerPartition& partition,
                                       double gamma, double eps) {
  DeviceGradStats s;
  auto reduced = reduce_stats(per_device);
  s.per_device_means = std::move(per_device);
  s.mean = std::move(reduced.mean);
  s.sq_mean = std::move(reduced.sq_mean);
  s.variance = std::move(reduced.variance);
  s.gsnr_raw = gsnr_raw(s.mean, s.variance, eps);
  s.gsnr_normalized = normalize_per_layer(s.gsnr_raw, partition);
  s.gsnr = clamp_gsnr(s.gsnr_normalized, gamma);
  return s;
}

DeviceGradStats compute_gsnr_field(const Model& model,
                                   std::span<const double> params,
                                   const ShardPlan& plan, const Dataset& data,
                                   const LayerPartition& partition,
                                   double gamma, double eps) {
  double loss = 0.0;
  auto means = device_grad_means(model, params, plan, data, &loss);
  auto stats = gsnr_from_device_means(std::move(means), partition, gamma, eps);
  stats.mean_loss = loss;
  return stats;
}

}  // namespace vrgd
