#pragma once

// Per-step training records, the accumulated generalization-gap estimators,
// a Monte-Carlo check of the one-step gap expectation, and GSNR trajectories.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vrgd/grad_pipeline.hpp"
#include "vrgd/models.hpp"
#include "vrgd/params.hpp"

namespace vrgd {

struct LayerGsnrSummary {
  std::string name;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct TrainRecord {
  std::size_t step = 0;  // number of updates applied so far
  double lr = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gap = 0.0;      // test_loss - train_loss
  double sum_var = 0.0;  // sum of device-wise variances
  double sum_gsq = 0.0;  // sum of squared gradient means
  double gap_est_sgd_increment = 0.0;
  double gap_est_vrgd_increment = 0.0;
  double gap_est_sgd = 0.0;   // running sums after this step
  double gap_est_vrgd = 0.0;
  // Raw GSNR summaries, over all parameters and per layer.
  double gsnr_mean = 0.0;
  double gsnr_min = 0.0;
  double gsnr_max = 0.0;
  std::vector<LayerGsnrSummary> layers;
  // Only filled when per-parameter capture is on.
  Field gsnr_raw;
  Field gsnr_normalized;
};

/// Append-only record list with the running estimator sums.
struct GapLedger {
  std::vector<TrainRecord> records;
  double accumulated_gap_est_sgd = 0.0;
  double accumulated_gap_est_vrgd = 0.0;
};

/// lr * sum(var).
double gap_increment_sgd(const DeviceGradStats& stats, double lr);
/// lr * sum(r * var) with the clamped GSNR field r. Since r <= 1 this never
/// exceeds the SGD increment.
double gap_increment_vrgd(const DeviceGradStats& stats, double lr);

/// Appends a record built from `stats` and updates the running sums. The
/// returned reference points into `ledger.records`.
const TrainRecord& record_step(GapLedger& ledger, const DeviceGradStats& stats,
                               const LayerPartition& partition,
                               double train_loss, double test_loss, double lr,
                               std::size_t step, bool per_param = false);

/// Draws a dataset of `n` samples from the task distribution.
using Sampler = std::function<Dataset(std::size_t n, std::uint64_t seed)>;

struct GapEstimate {
  double measured = 0.0;
  double predicted = 0.0;
};

/// Monte-Carlo estimate of E[dL(D) - dL(D')] after one SGD step of size
/// `lr` taken on D, where dL is the loss decrease and D, D' are independent
/// size-n draws. Repetition r uses sampler(2n, seed + r), split in halves.
/// The prediction is lr * sum_j s_j^2 / n with s_j^2 the unbiased per-sample
/// gradient variance on D, averaged over repetitions.
GapEstimate one_step_gap_mc(const Model& model, const Sampler& sampler,
                            std::span<const double> theta, double lr,
                            std::size_t n, std::size_t reps,
                            std::uint64_t seed);

enum class GsnrSeries {
  kNormalized,  // per-layer normalized, before the clamp
  kRaw,
};

/// One series per requested parameter index, one value per record. Throws
/// RangeError for indices outside the recorded field or when records carry no
/// per-parameter GSNR.
std::vector<std::vector<double>> gsnr_trajectory(
    std::span<const TrainRecord> records, std::span<const std::size_t> indices,
    GsnrSeries series = GsnrSeries::kNormalized);

/// First position at which `series` strictly exceeds its own median, or
/// series.size() if it never does.
std::size_t first_exceedance_of_median(std::span<const double> series);

// Serialization. Numbers are written with 17 significant digits.
std::string record_to_json_line(const TrainRecord& r);
TrainRecord record_from_json_line(const std::string& line);

inline constexpr const char* kSummaryCsvHeader =
    "step,lr,train_loss,test_loss,gap,sum_var,sum_gsq,gap_est_sgd,"
    "gap_est_vrgd,gsnr_mean,gsnr_min,gsnr_max";

std::string summary_csv_row(const TrainRecord& r);

/// Reads a summary CSV back into records. Fields the CSV does not carry
/// (increments, per-layer and per-parameter GSNR) stay zero or empty.
std::vector<TrainRecord> read_summary_csv(std::istream& in);

/// Formats a double with 17 significant digits.
std::string format_double(double x);

}  // namespace vrgd
