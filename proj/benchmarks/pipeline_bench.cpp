#include <benchmark/benchmark.h>

#include <random>

#include "vrgd/grad_pipeline.hpp"
#include "vrgd/models.hpp"

namespace {

std::vector<vrgd::Field> random_devices(std::size_t k, std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  std::vector<vrgd::Field> out(k, vrgd::Field(n));
  for (auto& v : out) for (double& x : v) x = d(rng);
  return out;
}

void BM_ReduceStats(benchmark::State& state) {
  const auto devices = random_devices(static_cast<std::size_t>(state.range(0)),
                                      static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(vrgd::reduce_stats(devices));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_ReduceStats)->Args({8, 1 << 12})->Args({32, 1 << 12})->Args({32, 1 << 16});

void BM_GsnrFromDeviceMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto devices = random_devices(static_cast<std::size_t>(state.range(0)), n);
  const auto part = vrgd::LayerPartition::from_lengths({{"a", n / 2}, {"b", n - n / 2}});
  for (auto _ : state) {
    benchmark::DoNotOptimize(vrgd::gsnr_from_device_means(devices, part, 0.1));
  }
}
BENCHMARK(BM_GsnrFromDeviceMeans)->Args({32, 1 << 12})->Args({32, 1 << 16});

void BM_ComputeGsnrFieldLinReg(benchmark::State& state) {
  vrgd::LinRegTask task;
  const vrgd::LinRegModel model(task);
  const auto data = vrgd::gen_linreg_data(task, 2048, 7);
  const vrgd::Field w(task.dim, 0.0);
  const auto plan = vrgd::shard_batch(vrgd::all_indices(2048),
                                      static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        vrgd::compute_gsnr_field(model, w, plan, data, model.partition(), 0.1));
  }
}
BENCHMARK(BM_ComputeGsnrFieldLinReg)->Arg(8)->Arg(32)->Arg(256);

void BM_ComputeGsnrFieldMlp(benchmark::State& state) {
  vrgd::MlpTask task;
  const vrgd::MlpModel model(task);
  const auto data = vrgd::gen_blob_data(task, 256, 16, 3).first;
  const vrgd::Field theta(model.param_count(), 0.01);
  const auto plan = vrgd::shard_batch(vrgd::all_indices(256), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        vrgd::compute_gsnr_field(model, theta, plan, data, model.partition(), 0.1));
  }
}
BENCHMARK(BM_ComputeGsnrFieldMlp);

}  // namespace
