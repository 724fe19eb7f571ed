#pragma once

// Baseline optimizers and their GSNR-adapted ("VR") variants. Every VR
// variant multiplies the clamped GSNR field into the gradient mean before
// any moment or velocity accumulation; the Adam family additionally keeps a
// bias-corrected moving average of the GSNR field itself.
//
// Steps mutate `params` and `state` in place and are deterministic: the same
// inputs always produce bitwise identical outputs. On a non-finite result a
// NumericError is thrown and neither `params` nor `state` is modified.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "vrgd/params.hpp"

namespace vrgd {

enum class OptimizerKind {
  kSgd,
  kMomentum,
  kAdam,
  kLars,
  kLamb,
  kVrSgd,
  kVrMomentum,
  kVrAdam,
  kVrLars,
  kVrLamb,
};

std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name);

bool is_variance_reduced(OptimizerKind kind);
/// The base optimizer a VR variant reduces to when GSNR is identically one.
OptimizerKind base_of(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kVrSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double beta3 = 0.9;  // GSNR moment decay
  double eps_adam = 1e-8;
  double gamma = 0.1;
  double momentum_coef = 0.9;
  double trust_eps = 1e-9;
  double weight_decay = 0.0;  // optional additive wd * theta on the raw gradient

  /// Throws ConfigError on out-of-range hyper-parameters.
  void validate() const;
};

struct OptimizerState {
  std::size_t step = 0;
  Field m;  // first moment (Adam/LAMB families)
  Field v;  // second moment
  Field p;  // GSNR moment (VR-Adam/VR-LAMB)
  Field u;  // velocity (Momentum/LARS families)
  // Bias-correction denominator for p, kept as the same moving average applied
  // to a field of ones so that p / p_debias is exactly 1 for a unit field.
  double p_debias = 0.0;
};

OptimizerState init_state(const OptimizerConfig& cfg, std::size_t param_len);

void sgd_step(Field& params, std::span<const double> grad_mean, double lr);
void vr_sgd_step(Field& params, std::span<const double> grad_mean,
                 std::span<const double> gsnr, double lr);

void momentum_step(Field& params, OptimizerState& state,
                   std::span<const double> grad_mean, double lr,
                   double momentum_coef);
void vr_momentum_step(Field& params, OptimizerState& state,
                      std::span<const double> grad_mean,
                      std::span<const double> gsnr, double lr,
                      double momentum_coef);

void adam_step(Field& params, OptimizerState& state,
               std::span<const double> grad_mean, double lr,
               const OptimizerConfig& cfg);
void vr_adam_step(Field& params, OptimizerState& state,
                  std::span<const double> grad_mean,
                  std::span<const double> gsnr, double lr,
                  const OptimizerConfig& cfg);

void lamb_step(Field& params, OptimizerState& state,
               std::span<const double> grad_mean, double lr,
               const OptimizerConfig& cfg, const LayerPartition& partition);
void vr_lamb_step(Field& params, OptimizerState& state,
                  std::span<const double> grad_mean,
                  std::span<const double> gsnr, double lr,
                  const OptimizerConfig& cfg, const LayerPartition& partition);

void lars_step(Field& params, OptimizerState& state,
               std::span<const double> grad_mean, double lr,
               const OptimizerConfig& cfg, const LayerPartition& partition);
void vr_lars_step(Field& params, OptimizerState& state,
                  std::span<const double> grad_mean,
                  std::span<const double> gsnr, double lr,
                  const OptimizerConfig& cfg, const LayerPartition& partition);

/// Dispatches on cfg.kind. `gsnr` is ignored by base optimizers and required
/// by VR ones. Applies weight decay to the gradient when configured.
void apply_step(const OptimizerConfig& cfg, Field& params,
                OptimizerState& state, std::span<const double> grad_mean,
                std::span<const double> gsnr, double lr,
                const LayerPartition& partition);

/// Layer trust ratio ||theta|| / (||update|| + trust_eps), or 1 when
/// ||theta|| is zero.
double trust_ratio(double param_norm, double update_norm, double trust_eps);

}  // namespace vrgd
