#include "vrgd/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "vrgd/errors.hpp"

namespace vrgd {

namespace {

// Fraction of the post-warmup phase completed at `step`, in [0, 1].
double progress(const Schedule& s, std::size_t step) {
  if (s.total_steps <= s.warmup_steps) return 1.0;
  const double span = static_cast<double>(s.total_steps - s.warmup_steps);
  const double done =
      step <= s.warmup_steps ? 0.0 : static_cast<double>(step - s.warmup_steps);
  return std::min(1.0, done / span);
}

}  // namespace

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kLinearWarmupCosine: return "linear_warmup_cosine";
    case ScheduleKind::kLinearWarmupPoly: return "linear_warmup_poly";
    case ScheduleKind::kStepDecay: return "step_decay";
  }
  return "unknown";
}

std::optional<ScheduleKind> parse_schedule_kind(std::string_view name) {
  for (auto k : {ScheduleKind::kConstant, ScheduleKind::kLinearWarmupCosine,
                 ScheduleKind::kLinearWarmupPoly, ScheduleKind::kStepDecay}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void Schedule::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) {
    throw ConfigError("schedule base_lr must be positive and finite");
  }
  if (warmup_steps > total_steps) {
    throw ConfigError("warmup_steps exceeds total_steps");
  }
  if (!(poly_power > 0.0)) throw ConfigError("poly_power must be positive");
  for (const auto& p : decay_points) {
    if (!(p.factor > 0.0 && p.factor <= 1.0)) {
      throw ConfigError("decay factors must lie in (0, 1]");
    }
  }
}

double lr_at(const Schedule& s, std::size_t step) {
  if (step > s.total_steps) {
    throw RangeError("step " + std::to_string(step) + " past total_steps " +
                     std::to_string(s.total_steps));
  }
  const bool warmup_kind = s.kind == ScheduleKind::kLinearWarmupCosine ||
                           s.kind == ScheduleKind::kLinearWarmupPoly;
  if (warmup_kind && step < s.warmup_steps) {
    return s.base_lr * static_cast<double>(step + 1) /
           static_cast<double>(s.warmup_steps);
  }
  switch (s.kind) {
    case ScheduleKind::kConstant:
      return s.base_lr;
    case ScheduleKind::kLinearWarmupCosine:
      return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress(s, step)));
    case ScheduleKind::kLinearWarmupPoly:
      return s.base_lr * std::pow(1.0 - progress(s, step), s.poly_power);
    case ScheduleKind::kStepDecay: {
      double lr = s.base_lr;
      for (const auto& p : s.decay_points) {
        if (step >= p.step) lr *= p.factor;
      }
      return lr;
    }
  }
  return s.base_lr;
}

double scaled_lr(double base, std::size_t batch, std::size_t reference_batch) {
  if (batch == 0 || reference_batch == 0) {
    throw ConfigError("batch sizes for LR scaling must be positive");
  }
  return base * std::sqrt(static_cast<double>(batch) /
                          static_cast<double>(reference_batch));
}

}  // namespace vrgd
