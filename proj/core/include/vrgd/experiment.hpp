#pragma once

// Experiment configuration and orchestration: the training loop over a
// simulated data-parallel batch, and the run / sweep / compare drivers that
// write artifacts to disk.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrgd/diagnostics.hpp"
#include "vrgd/models.hpp"
#include "vrgd/optimizers.hpp"
#include "vrgd/params.hpp"
#include "vrgd/schedules.hpp"

namespace vrgd {

struct ModelConfig {
  enum class Kind { kLinReg, kMlp };
  Kind kind = Kind::kLinReg;
  LinRegTask linreg;
  MlpTask mlp;
  std::size_t n_train = 8192;
  std::size_t n_test = 0;  // 0 means n_train
};

struct Seeds {
  std::uint64_t data = 0;
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
};

struct LrScaling {
  bool sqrt = false;
  std::size_t reference_batch = 256;
};

struct ExperimentConfig {
  ModelConfig model;
  OptimizerConfig optimizer;  // its gamma is taken from `gamma` below
  Schedule schedule;          // total_steps 0 means `steps`
  std::size_t k = 0;          // 0 picks the default device count
  std::size_t global_batch = 256;
  std::size_t steps = 100;
  double gamma = 0.1;
  double eps = 1e-12;
  Seeds seeds;
  InitSpec init;  // seed comes from seeds.init
  LrScaling lr_scaling;
  std::filesystem::path output_dir = "vrgd_out";
  bool record_per_param_gsnr = false;
  std::size_t per_param_gsnr_limit = 4096;
};

/// Smallest divisor of `global_batch` that is at least 8, falling back to the
/// smallest divisor >= 2 for batches with none. Throws ConfigError when the
/// batch is below 2.
std::size_t default_device_count(std::size_t global_batch);

/// Parses JSON text. Unknown fields, wrong types and invalid values throw
/// ConfigError. Defaults are resolved (k, n_test, schedule length, gamma).
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of a resolved config. It parses back to the same config.
std::string to_json_text(const ExperimentConfig& config);

/// Checks cross-field invariants. parse_config already calls it.
void validate(const ExperimentConfig& config);

/// Base schedule with the optional sqrt batch scaling folded into base_lr.
Schedule effective_schedule(const ExperimentConfig& config);

struct RunResult {
  std::vector<TrainRecord> records;
  Field final_params;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;
  double gap = 0.0;
  double accumulated_gap_est_sgd = 0.0;
  double accumulated_gap_est_vrgd = 0.0;
};

using RecordObserver = std::function<void(const TrainRecord&)>;

/// Runs the training loop in memory. The observer sees every record as soon
/// as it is produced, so a NumericError thrown mid-run leaves earlier records
/// delivered.
RunResult train(const ExperimentConfig& config, const RecordObserver& observer = {});

/// Runs and writes config.json, records.jsonl, summary.csv and final.json into
/// `out_dir`. Records are flushed before any error propagates.
RunResult run_experiment(const ExperimentConfig& config,
                         const std::filesystem::path& out_dir);

enum class SweepAxis { kGamma, kK, kLr, kBatch };

std::string_view to_string(SweepAxis axis);
std::optional<SweepAxis> parse_sweep_axis(std::string_view name);

/// Copy of `config` with one axis set to `value`.
ExperimentConfig with_axis(const ExperimentConfig& config, SweepAxis axis,
                           double value);

struct SweepRow {
  double value = 0.0;
  double final_test_loss = 0.0;
  double gap = 0.0;
  std::string status = "ok";
};

/// One run per value under out_dir/<axis>_<index>, then out_dir/sweep.csv in
/// input order. Failed sub-runs are reported in their row and do not stop the
/// sweep. An empty value list throws ConfigError.
std::vector<SweepRow> sweep(const ExperimentConfig& config, SweepAxis axis,
                            const std::vector<double>& values,
                            const std::filesystem::path& out_dir);

/// First record step whose test loss is <= target, if any.
std::optional<std::size_t> first_step_reaching(const std::vector<TrainRecord>& records,
                                               double target);

struct Crossing {
  OptimizerKind optimizer;
  OptimizerKind reference;
  double reference_final_test_loss = 0.0;
  std::optional<std::size_t> first_step;
};

struct ComparisonResult {
  std::vector<OptimizerKind> optimizers;
  std::vector<RunResult> runs;
  std::vector<Crossing> crossings;  // every ordered pair
};

/// Runs each optimizer on identical data and seeds under out_dir/<name>,
/// then writes comparison.csv (per-step test losses side by side) and
/// crossings.csv. Needs at least two optimizers.
ComparisonResult compare(const ExperimentConfig& config,
                         const std::vector<OptimizerKind>& optimizers,
                         const std::filesystem::path& out_dir);

}  // namespace vrgd
