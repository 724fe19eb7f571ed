#include "vrgd/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>

#include "json.hpp"
#include "vrgd/errors.hpp"

namespace vrgd {

namespace {

using nlohmann::json;

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double parse_double(std::string_view field) {
  double x = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, x);
  if (ec != std::errc() || ptr != end) {
    throw StructuralError("malformed number in summary CSV: '" +
                          std::string(field) + "'");
  }
  return x;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x,
                                       std::chars_format::general, 17);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

double gap_increment_sgd(const DeviceGradStats& stats, double lr) {
  return lr * sum(stats.variance);
}

double gap_increment_vrgd(const DeviceGradStats& stats, double lr) {
  if (stats.gsnr.size() != stats.variance.size()) {
    throw StructuralError("GSNR and variance fields differ in length");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < stats.variance.size(); ++j) {
    s += stats.gsnr[j] * stats.variance[j];
  }
  return lr * s;
}

const TrainRecord& record_step(GapLedger& ledger, const DeviceGradStats& stats,
                               const LayerPartition& partition,
                               double train_loss, double test_loss, double lr,
                               std::size_t step, bool per_param) {
  TrainRecord r;
  r.step = step;
  r.lr = lr;
  r.train_loss = train_loss;
  r.test_loss = test_loss;
  r.gap = test_loss - train_loss;
  r.sum_var = sum(stats.variance);
  for (double g : stats.mean) r.sum_gsq += g * g;
  r.gap_est_sgd_increment = gap_increment_sgd(stats, lr);
  r.gap_est_vrgd_increment = gap_increment_vrgd(stats, lr);

  ledger.accumulated_gap_est_sgd += r.gap_est_sgd_increment;
  ledger.accumulated_gap_est_vrgd += r.gap_est_vrgd_increment;
  r.gap_est_sgd = ledger.accumulated_gap_est_sgd;
  r.gap_est_vrgd = ledger.accumulated_gap_est_vrgd;

  if (!stats.gsnr_raw.empty()) {
    const auto [lo, hi] =
        std::minmax_element(stats.gsnr_raw.begin(), stats.gsnr_raw.end());
    r.gsnr_min = *lo;
    r.gsnr_max = *hi;
    r.gsnr_mean = sum(stats.gsnr_raw) / static_cast<double>(stats.gsnr_raw.size());
    for (const auto& slice : layer_slices(stats.gsnr_raw, partition)) {
      const auto [l, h] = std::minmax_element(slice.values.begin(), slice.values.end());
      r.layers.push_back({std::string(slice.name),
                          sum(slice.values) / static_cast<double>(slice.values.size()),
                          *l, *h});
    }
  }
  if (per_param) {
    r.gsnr_raw = stats.gsnr_raw;
    r.gsnr_normalized = stats.gsnr_normalized;
  }
  ledger.records.push_back(std::move(r));
  return ledger.records.back();
}

GapEstimate one_step_gap_mc(const Model& model, const Sampler& sampler,
                            std::span<const double> theta, double lr,
                            std::size_t n, std::size_t reps,
                            std::uint64_t seed) {
  if (n < 2) throw ConfigError("one_step_gap_mc needs n >= 2");
  if (reps == 0) throw ConfigError("one_step_gap_mc needs reps >= 1");
  const std::size_t dim = theta.size();

  std::vector<std::size_t> train_idx(n), test_idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    train_idx[i] = i;
    test_idx[i] = n + i;
  }

  double measured_sum = 0.0;
  double predicted_sum = 0.0;
  Field grad, sample_grad;
  Field moved(dim);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const Dataset data = sampler(2 * n, seed + rep);
    if (data.size() != 2 * n) throw StructuralError("sampler returned wrong size");

    const double train_before = model.loss_grad(theta, data, train_idx, grad);
    const double test_before = model.loss(theta, data, test_idx);
    for (std::size_t j = 0; j < dim; ++j) moved[j] = theta[j] - lr * grad[j];
    const double train_after = model.loss(moved, data, train_idx);
    const double test_after = model.loss(moved, data, test_idx);
    measured_sum += (train_before - train_after) - (test_before - test_after);

    // Welford over per-sample gradients of D.
    Field mean(dim, 0.0), m2(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t one = train_idx[i];
      model.loss_grad(theta, data, std::span<const std::size_t>(&one, 1), sample_grad);
      for (std::size_t j = 0; j < dim; ++j) {
        const double delta = sample_grad[j] - mean[j];
        mean[j] += delta / static_cast<double>(i + 1);
        m2[j] += delta * (sample_grad[j] - mean[j]);
      }
    }
    double var_sum = 0.0;
    for (double m : m2) var_sum += m / static_cast<double>(n - 1);
    predicted_sum += lr * var_sum / static_cast<double>(n);
  }
  const double r = static_cast<double>(reps);
  return {measured_sum / r, predicted_sum / r};
}

std::vector<std::vector<double>> gsnr_trajectory(
    std::span<const TrainRecord> records, std::span<const std::size_t> indices,
    GsnrSeries series) {
  std::vector<std::vector<double>> out(indices.size());
  for (auto& s : out) s.reserve(records.size());
  for (const auto& rec : records) {
    const Field& field =
        series == GsnrSeries::kRaw ? rec.gsnr_raw : rec.gsnr_normalized;
    if (field.empty()) {
      throw RangeError("record at step " + std::to_string(rec.step) +
                       " carries no per-parameter GSNR");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= field.size()) {
        throw RangeError("parameter index " + std::to_string(indices[i]) +
                         " out of range for " + std::to_string(field.size()) +
                         " parameters");
      }
      out[i].push_back(field[indices[i]]);
    }
  }
  return out;
}

std::size_t first_exceedance_of_median(std::span<const double> series) {
  if (series.empty()) return 0;
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (std::size_t i = 0; i < n; ++i) {
    if (series[i] > median) return i;
  }
  return n;
}

std::string record_to_json_line(const TrainRecord& r) {
  json j = {
      {"step", r.step},
      {"lr", r.lr},
      {"train_loss", r.train_loss},
      {"test_loss", r.test_loss},
      {"gap", r.gap},
      {"sum_var", r.sum_var},
      {"sum_gsq", r.sum_gsq},
      {"gap_est_sgd_increment", r.gap_est_sgd_increment},
      {"gap_est_vrgd_increment", r.gap_est_vrgd_increment},
      {"gap_est_sgd", r.gap_est_sgd},
      {"gap_est_vrgd", r.gap_est_vrgd},
      {"gsnr_mean", r.gsnr_mean},
      {"gsnr_min", r.gsnr_min},
      {"gsnr_max", r.gsnr_max},
  };
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"name", l.name}, {"mean", l.mean}, {"min", l.min}, {"max", l.max}});
  }
  j["per_layer_gsnr"] = std::move(layers);
  if (!r.gsnr_raw.empty()) {
    j["per_param_gsnr_raw"] = r.gsnr_raw;
    j["per_param_gsnr_normalized"] = r.gsnr_normalized;
  }
  return j.dump();
}

TrainRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw StructuralError(std::string("bad record line: ") + e.what());
  }
  TrainRecord r;
  try {
    r.step = j.at("step").get<std::size_t>();
    r.lr = j.at("lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    r.gap = j.at("gap").get<double>();
    r.sum_var = j.at("sum_var").get<double>();
    r.sum_gsq = j.at("sum_gsq").get<double>();
    r.gap_est_sgd_increment = j.at("gap_est_sgd_increment").get<double>();
    r.gap_est_vrgd_increment = j.at("gap_est_vrgd_increment").get<double>();
    r.gap_est_sgd = j.at("gap_est_sgd").get<double>();
    r.gap_est_vrgd = j.at("gap_est_vrgd").get<double>();
    r.gsnr_mean = j.at("gsnr_mean").get<double>();
    r.gsnr_min = j.at("gsnr_min").get<double>();
    r.gsnr_max = j.at("gsnr_max").get<double>();
    for (const auto& l : j.at("per_layer_gsnr")) {
      r.layers.push_back({l.at("name").get<std::string>(), l.at("mean").get<double>(),
                          l.at("min").get<double>(), l.at("max").get<double>()});
    }
    if (j.contains("per_param_gsnr_raw")) {
      r.gsnr_raw = j.at("per_param_gsnr_raw").get<Field>();
      r.gsnr_normalized = j.at("per_param_gsnr_normalized").get<Field>();
    }
  } catch (const json::exception& e) {
    throw StructuralError(std::string("bad record line: ") + e.what());
  }
  return r;
}

std::string summary_csv_row(const TrainRecord& r) {
  std::string row = std::to_string(r.step);
  for (double x : {r.lr, r.train_loss, r.test_loss, r.gap, r.sum_var, r.sum_gsq,
                   r.gap_est_sgd, r.gap_est_vrgd, r.gsnr_mean, r.gsnr_min,
                   r.gsnr_max}) {
    row += ',';
    row += format_double(x);
  }
  return row;
}

std::vector<TrainRecord> read_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kSummaryCsvHeader) {
    throw StructuralError("summary CSV header mismatch");
  }
  std::vector<TrainRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != 12) throw StructuralError("summary CSV row has wrong width");
    TrainRecord r;
    r.step = static_cast<std::size_t>(parse_double(cells[0]));
    double* fields[] = {&r.lr,      &r.train_loss,  &r.test_loss,   &r.gap,
                        &r.sum_var, &r.sum_gsq,     &r.gap_est_sgd, &r.gap_est_vrgd,
                        &r.gsnr_mean, &r.gsnr_min, &r.gsnr_max};
    for (std::size_t c = 0; c < 11; ++c) *fields[c] = parse_double(cells[c + 1]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vrgd
