#include "vrgd/optimizers.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "vrgd/errors.hpp"

namespace vrgd {

namespace {

constexpr std::array<std::pair<OptimizerKind, std::string_view>, 10> kNames{{
    {OptimizerKind::kSgd, "sgd"},
    {OptimizerKind::kMomentum, "momentum"},
    {OptimizerKind::kAdam, "adam"},
    {OptimizerKind::kLars, "lars"},
    {OptimizerKind::kLamb, "lamb"},
    {OptimizerKind::kVrSgd, "vr_sgd"},
    {OptimizerKind::kVrMomentum, "vr_momentum"},
    {OptimizerKind::kVrAdam, "vr_adam"},
    {OptimizerKind::kVrLars, "vr_lars"},
    {OptimizerKind::kVrLamb, "vr_lamb"},
}};

void check_lengths(std::span<const double> params, std::span<const double> grad,
                   std::span<const double> gsnr, bool needs_gsnr) {
  if (grad.size() != params.size()) {
    throw StructuralError("gradient length does not match parameters");
  }
  if (needs_gsnr && gsnr.size() != params.size()) {
    throw StructuralError("GSNR field length does not match parameters");
  }
}

// gsnr[j] * g[j] for VR variants, g[j] otherwise.
inline double adapted(std::span<const double> grad, std::span<const double> gsnr,
                      std::size_t j) {
  return gsnr.empty() ? grad[j] : gsnr[j] * grad[j];
}

void commit(Field& params, Field&& next, std::string_view who) {
  if (!all_finite(next)) {
    throw NumericError(std::string(who) + " step produced a non-finite parameter");
  }
  params = std::move(next);
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void sgd_impl(Field& params, std::span<const double> grad,
              std::span<const double> gsnr, double lr) {
  Field next(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    next[j] = gsnr.empty() ? params[j] - lr * grad[j]
                           : params[j] - lr * gsnr[j] * grad[j];
  }
  commit(params, std::move(next), gsnr.empty() ? "sgd" : "vr_sgd");
}

void momentum_impl(Field& params, OptimizerState& state,
                   std::span<const double> grad, std::span<const double> gsnr,
                   double lr, double coef) {
  const std::size_t n = params.size();
  if (state.u.size() != n) throw StructuralError("momentum state not initialized");
  Field u(n), next(n);
  for (std::size_t j = 0; j < n; ++j) {
    u[j] = coef * state.u[j] + adapted(grad, gsnr, j);
    next[j] = params[j] - lr * u[j];
  }
  commit(params, std::move(next), gsnr.empty() ? "momentum" : "vr_momentum");
  state.u = std::move(u);
  ++state.step;
}

// Shared Adam core: updates the moments and returns the bias-corrected
// direction m_hat / (sqrt(v_hat) + eps). The new state is written to `out`.
Field adam_direction(const OptimizerState& state, OptimizerState& out,
                     std::span<const double> grad, std::span<const double> gsnr,
                     const OptimizerConfig& cfg) {
  const std::size_t n = grad.size();
  if (state.m.size() != n || state.v.size() != n) {
    throw StructuralError("Adam state not initialized");
  }
  out = state;
  out.step = state.step + 1;
  const double t = static_cast<double>(out.step);

  Field adapted_grad(grad.begin(), grad.end());
  if (!gsnr.empty()) {
    if (state.p.size() != n) throw StructuralError("GSNR moment not initialized");
    out.p_debias = cfg.beta3 * state.p_debias + (1.0 - cfg.beta3) * 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.p[j] = cfg.beta3 * state.p[j] + (1.0 - cfg.beta3) * gsnr[j];
      const double p_hat = out.p[j] / out.p_debias;
      adapted_grad[j] = p_hat * grad[j];
    }
  }

  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  Field dir(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double g = adapted_grad[j];
    out.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g;
    out.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = out.m[j] / bc1;
    const double v_hat = out.v[j] / bc2;
    dir[j] = m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
  }
  return dir;
}

void adam_impl(Field& params, OptimizerState& state, std::span<const double> grad,
               std::span<const double> gsnr, double lr,
               const OptimizerConfig& cfg) {
  OptimizerState next_state;
  const Field dir = adam_direction(state, next_state, grad, gsnr, cfg);
  Field next(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) next[j] = params[j] - lr * dir[j];
  commit(params, std::move(next), gsnr.empty() ? "adam" : "vr_adam");
  state = std::move(next_state);
}

void lamb_impl(Field& params, OptimizerState& state, std::span<const double> grad,
               std::span<const double> gsnr, double lr,
               const OptimizerConfig& cfg, const LayerPartition& partition) {
  require_length(params, partition, "parameters");
  OptimizerState next_state;
  const Field dir = adam_direction(state, next_state, grad, gsnr, cfg);
  Field next(params.size());
  for (const auto& seg : partition.segments()) {
    const std::span<const double> theta(params.data() + seg.offset, seg.length);
    const std::span<const double> upd(dir.data() + seg.offset, seg.length);
    const double ratio = trust_ratio(l2(theta), l2(upd), cfg.trust_eps);
    for (std::size_t j = seg.offset; j < seg.offset + seg.length; ++j) {
      next[j] = params[j] - lr * ratio * dir[j];
    }
  }
  commit(params, std::move(next), gsnr.empty() ? "lamb" : "vr_lamb");
  state = std::move(next_state);
}

void lars_impl(Field& params, OptimizerState& state, std::span<const double> grad,
               std::span<const double> gsnr, double lr,
               const OptimizerConfig& cfg, const LayerPartition& partition) {
  require_length(params, partition, "parameters");
  const std::size_t n = params.size();
  if (state.u.size() != n) throw StructuralError("LARS state not initialized");
  Field g(n);
  for (std::size_t j = 0; j < n; ++j) g[j] = adapted(grad, gsnr, j);
  Field u(n), next(n);
  for (const auto& seg : partition.segments()) {
    const std::span<const double> theta(params.data() + seg.offset, seg.length);
    const std::span<const double> gl(g.data() + seg.offset, seg.length);
    const double local_lr = trust_ratio(l2(theta), l2(gl), cfg.trust_eps);
    for (std::size_t j = seg.offset; j < seg.offset + seg.length; ++j) {
      u[j] = cfg.momentum_coef * state.u[j] + local_lr * g[j];
      next[j] = params[j] - lr * u[j];
    }
  }
  commit(params, std::move(next), gsnr.empty() ? "lars" : "vr_lars");
  state.u = std::move(u);
  ++state.step;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool is_variance_reduced(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kVrSgd:
    case OptimizerKind::kVrMomentum:
    case OptimizerKind::kVrAdam:
    case OptimizerKind::kVrLars:
    case OptimizerKind::kVrLamb:
      return true;
    default:
      return false;
  }
}

OptimizerKind base_of(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kVrSgd: return OptimizerKind::kSgd;
    case OptimizerKind::kVrMomentum: return OptimizerKind::kMomentum;
    case OptimizerKind::kVrAdam: return OptimizerKind::kAdam;
    case OptimizerKind::kVrLars: return OptimizerKind::kLars;
    case OptimizerKind::kVrLamb: return OptimizerKind::kLamb;
    default: return kind;
  }
}

void OptimizerConfig::validate() const {
  auto in_unit = [](double b) { return b >= 0.0 && b < 1.0; };
  if (!in_unit(beta1) || !in_unit(beta2) || !in_unit(beta3)) {
    throw ConfigError("beta1, beta2 and beta3 must lie in [0, 1)");
  }
  if (!in_unit(momentum_coef)) throw ConfigError("momentum_coef must lie in [0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(eps_adam > 0.0) || !(trust_eps > 0.0)) {
    throw ConfigError("eps_adam and trust_eps must be positive");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

OptimizerState init_state(const OptimizerConfig& cfg, std::size_t param_len) {
  OptimizerState s;
  switch (cfg.kind) {
    case OptimizerKind::kSgd:
    case OptimizerKind::kVrSgd:
      break;
    case OptimizerKind::kMomentum:
    case OptimizerKind::kVrMomentum:
    case OptimizerKind::kLars:
    case OptimizerKind::kVrLars:
      s.u.assign(param_len, 0.0);
      break;
    case OptimizerKind::kVrAdam:
    case OptimizerKind::kVrLamb:
      s.p.assign(param_len, 0.0);
      [[fallthrough]];
    case OptimizerKind::kAdam:
    case OptimizerKind::kLamb:
      s.m.assign(param_len, 0.0);
      s.v.assign(param_len, 0.0);
      break;
  }
  return s;
}

double trust_ratio(double param_norm, double update_norm, double trust_eps) {
  return param_norm == 0.0 ? 1.0 : param_norm / (update_norm + trust_eps);
}

void sgd_step(Field& params, std::span<const double> grad_mean, double lr) {
  check_lengths(params, grad_mean, {}, false);
  sgd_impl(params, grad_mean, {}, lr);
}

void vr_sgd_step(Field& params, std::span<const double> grad_mean,
                 std::span<const double> gsnr, double lr) {
  check_lengths(params, grad_mean, gsnr, true);
  sgd_impl(params, grad_mean, gsnr, lr);
}

void momentum_step(Field& params, OptimizerState& state,
                   std::span<const double> grad_mean, double lr,
                   double momentum_coef) {
  check_lengths(params, grad_mean, {}, false);
  momentum_impl(params, state, grad_mean, {}, lr, momentum_coef);
}

void vr_momentum_step(Field& params, OptimizerState& state,
                      std::span<const double> grad_mean,
                      std::span<const double> gsnr, double lr,
                      double momentum_coef) {
  check_lengths(params, grad_mean, gsnr, true);
  momentum_impl(params, state, grad_mean, gsnr, lr, momentum_coef);
}

void adam_step(Field& params, OptimizerState& state,
               std::span<const double> grad_mean, double lr,
               const OptimizerConfig& cfg) {
  check_lengths(params, grad_mean, {}, false);
  adam_impl(params, state, grad_mean, {}, lr, cfg);
}

void vr_adam_step(Field& params, OptimizerState& state,
                  std::span<const double> grad_mean,
                  std::span<const double> gsnr, double lr,
                  const OptimizerConfig& cfg) {
  check_lengths(params, grad_mean, gsnr, true);
  adam_impl(params, state, grad_mean, gsnr, lr, cfg);
}

void lamb_step(Field& params, OptimizerState& state,
               std::span<const double> grad_mean, double lr,
               const OptimizerConfig& cfg, const LayerPartition& partition) {
  check_lengths(params, grad_mean, {}, false);
  lamb_impl(params, state, grad_mean, {}, lr, cfg, partition);
}

void vr_lamb_step(Field& params, OptimizerState& state,
                  std::span<const double> grad_mean,
                  std::span<const double> gsnr, double lr,
                  const OptimizerConfig& cfg, const LayerPartition& partition) {
  check_lengths(params, grad_mean, gsnr, true);
  lamb_impl(params, state, grad_mean, gsnr, lr, cfg, partition);
}

void lars_step(Field& params, OptimizerState& state,
               std::span<const double> grad_mean, double lr,
               const OptimizerConfig& cfg, const LayerPartition& partition) {
  check_lengths(params, grad_mean, {}, false);
  lars_impl(params, state, grad_mean, {}, lr, cfg, partition);
}

void vr_lars_step(Field& params, OptimizerState& state,
                  std::span<const double> grad_mean,
                  std::span<const double> gsnr, double lr,
                  const OptimizerConfig& cfg, const LayerPartition& partition) {
  check_lengths(params, grad_mean, gsnr, true);
  lars_impl(params, state, grad_mean, gsnr, lr, cfg, partition);
}

void apply_step(const OptimizerConfig& cfg, Field& params,
                OptimizerState& state, std::span<const double> grad_mean,
                std::span<const double> gsnr, double lr,
                const LayerPartition& partition) {
  Field decayed;
  if (cfg.weight_decay != 0.0) {
    check_lengths(params, grad_mean, {}, false);
    decayed.assign(grad_mean.begin(), grad_mean.end());
    for (std::size_t j = 0; j < decayed.size(); ++j) {
      decayed[j] += cfg.weight_decay * params[j];
    }
    grad_mean = decayed;
  }
  switch (cfg.kind) {
    case OptimizerKind::kSgd:
      sgd_step(params, grad_mean, lr);
      ++state.step;
      break;
    case OptimizerKind::kVrSgd:
      vr_sgd_step(params, grad_mean, gsnr, lr);
      ++state.step;
      break;
    case OptimizerKind::kMomentum:
      momentum_step(params, state, grad_mean, lr, cfg.momentum_coef);
      break;
    case OptimizerKind::kVrMomentum:
      vr_momentum_step(params, state, grad_mean, gsnr, lr, cfg.momentum_coef);
      break;
    case OptimizerKind::kAdam:
      adam_step(params, state, grad_mean, lr, cfg);
      break;
    case OptimizerKind::kVrAdam:
      vr_adam_step(params, state, grad_mean, gsnr, lr, cfg);
      break;
    case OptimizerKind::kLars:
      lars_step(params, state, grad_mean, lr, cfg, partition);
      break;
    case OptimizerKind::kVrLars:
      vr_lars_step(params, state, grad_mean, gsnr, lr, cfg, partition);
      break;
    case OptimizerKind::kLamb:
      lamb_step(params, state, grad_mean, lr, cfg, partition);
      break;
    case OptimizerKind::kVrLamb:
      vr_lamb_step(params, state, grad_mean, gsnr, lr, cfg, partition);
      break;
  }
}

}  // namespace vrgd
