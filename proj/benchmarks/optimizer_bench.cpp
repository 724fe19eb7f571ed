#include <benchmark/benchmark.h>

#include <random>

#include "vrgd/optimizers.hpp"

namespace {

void BM_OptimizerStep(benchmark::State& state) {
  const auto kind = static_cast<vrgd::OptimizerKind>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  vrgd::OptimizerConfig cfg;
  cfg.kind = kind;
  const auto part = vrgd::LayerPartition::from_lengths({{"a", n / 4}, {"b", n - n / 4}});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), r(0.1, 1.0);
  vrgd::Field params(n), grad(n), gsnr(n);
  for (std::size_t j = 0; j < n; ++j) {
    params[j] = u(rng);
    grad[j] = 1e-6 * u(rng);
    gsnr[j] = r(rng);
  }
  auto st = vrgd::init_state(cfg, n);
  for (auto _ : state) {
    vrgd::apply_step(cfg, params, st, grad, gsnr, 1e-6, part);
    benchmark::ClobberMemory();
  }
  state.SetLabel(std::string(vrgd::to_string(kind)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void Kinds(benchmark::internal::Benchmark* b) {
  for (int k = 0; k < 10; ++k) b->Args({k, 1 << 14});
}
BENCHMARK(BM_OptimizerStep)->Apply(Kinds);

}  // namespace
BENCHMARK_MAIN();
