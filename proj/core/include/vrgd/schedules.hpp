#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace vrgd {

enum class ScheduleKind {
  kConstant,
  kLinearWarmupCosine,
  kLinearWarmupPoly,
  kStepDecay,
};

std::string_view to_string(ScheduleKind kind);
std::optional<ScheduleKind> parse_schedule_kind(std::string_view name);

struct DecayPoint {
  std::size_t step = 0;  // factor applies from this step on
  double factor = 1.0;
};

struct Schedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double base_lr = 0.1;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double poly_power = 2.0;
  std::vector<DecayPoint> decay_points;

  /// Throws ConfigError on a non-positive base_lr, warmup longer than the
  /// run, or decay factors outside (0, 1].
  void validate() const;
};

/// Learning rate at `step`, for 0 <= step <= total_steps. Warmup ramps
/// linearly from base_lr / warmup_steps up to base_lr at step warmup_steps-1;
/// the decay phase then runs from base_lr to its end value at total_steps.
/// Throws RangeError past total_steps.
double lr_at(const Schedule& s, std::size_t step);

/// Square-root batch scaling: base * sqrt(batch / reference_batch).
double scaled_lr(double base, std::size_t batch, std::size_t reference_batch);

}  // namespace vrgd
