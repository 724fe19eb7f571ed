#include "vrgd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vrgd/errors.hpp"
#include "vrgd/grad_pipeline.hpp"

namespace vrgd {

namespace {

using nlohmann::json;

// Strict view over one JSON object: every key read is remembered, and
// finish() rejects whatever was not.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw type_error(key, "a number");
    out = v.get<double>();
  }

  template <class U>
  void count(const char* key, U& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) throw type_error(key, "a non-negative integer");
    out = static_cast<U>(v.get<std::uint64_t>());
  }

  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw type_error(key, "a boolean");
    out = v.get<bool>();
  }

  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw type_error(key, "a string");
    out = v.get<std::string>();
  }

  void numbers(const char* key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "an array of numbers");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number()) throw type_error(key, "an array of numbers");
      out.push_back(x.get<double>());
    }
  }

  void counts(const char* key, std::vector<std::size_t>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "an array of non-negative integers");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number_unsigned()) {
        throw type_error(key, "an array of non-negative integers");
      }
      out.push_back(x.get<std::size_t>());
    }
  }

  const json* object(const char* key) {
    return has(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown field '" + where_ + "." + key + "'");
    }
  }

 private:
  ConfigError type_error(const char* key, const char* what) const {
    return ConfigError("field '" + where_ + "." + key + "' must be " + what);
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string_view input_dist_name(InputDistribution d) {
  return d == InputDistribution::kUniform01 ? "uniform01" : "standard_normal";
}

std::string_view loss_name(RegressionLoss l) {
  return l == RegressionLoss::kAbs ? "abs" : "mse";
}

std::string_view init_name(InitSpec::Kind k) {
  switch (k) {
    case InitSpec::Kind::kZeros: return "zeros";
    case InitSpec::Kind::kConstant: return "constant";
    case InitSpec::Kind::kUniform: return "uniform";
  }
  return "zeros";
}

void parse_model(const json& j, ModelConfig& m) {
  Fields f(j, "model");
  std::string kind = "linreg";
  f.string("kind", kind);
  f.count("n_train", m.n_train);
  f.count("n_test", m.n_test);
  if (kind == "linreg") {
    m.kind = ModelConfig::Kind::kLinReg;
    f.count("dim", m.linreg.dim);
    f.numbers("true_weights", m.linreg.true_weights);
    f.number("noise_std", m.linreg.noise_std);
    std::string dist(input_dist_name(m.linreg.input_dist));
    f.string("input_dist", dist);
    if (dist == "standard_normal") {
      m.linreg.input_dist = InputDistribution::kStandardNormal;
    } else if (dist == "uniform01") {
      m.linreg.input_dist = InputDistribution::kUniform01;
    } else {
      throw ConfigError("unknown model.input_dist '" + dist + "'");
    }
    std::string loss(loss_name(m.linreg.loss));
    f.string("loss", loss);
    if (loss == "mse") {
      m.linreg.loss = RegressionLoss::kMse;
    } else if (loss == "abs") {
      m.linreg.loss = RegressionLoss::kAbs;
    } else {
      throw ConfigError("unknown model.loss '" + loss + "'");
    }
  } else if (kind == "mlp") {
    m.kind = ModelConfig::Kind::kMlp;
    f.counts("layer_sizes", m.mlp.layer_sizes);
    f.number("label_smoothing", m.mlp.label_smoothing);
    f.number("class_sep", m.mlp.class_sep);
    f.number("blob_std", m.mlp.blob_std);
  } else {
    throw ConfigError("unknown model.kind '" + kind + "'");
  }
  f.finish();
}

void parse_optimizer(const json& j, OptimizerConfig& o) {
  Fields f(j, "optimizer");
  std::string kind(to_string(o.kind));
  f.string("kind", kind);
  const auto parsed = parse_optimizer_kind(kind);
  if (!parsed) throw ConfigError("unknown optimizer.kind '" + kind + "'");
  o.kind = *parsed;
  f.number("beta1", o.beta1);
  f.number("beta2", o.beta2);
  f.number("beta3", o.beta3);
  f.number("eps_adam", o.eps_adam);
  f.number("momentum_coef", o.momentum_coef);
  f.number("trust_eps", o.trust_eps);
  f.number("weight_decay", o.weight_decay);
  f.finish();
}

void parse_schedule(const json& j, Schedule& s) {
  Fields f(j, "schedule");
  std::string kind(to_string(s.kind));
  f.string("kind", kind);
  const auto parsed = parse_schedule_kind(kind);
  if (!parsed) throw ConfigError("unknown schedule.kind '" + kind + "'");
  s.kind = *parsed;
  f.number("base_lr", s.base_lr);
  f.count("warmup_steps", s.warmup_steps);
  f.count("total_steps", s.total_steps);
  f.number("poly_power", s.poly_power);
  if (const json* pts = f.object("decay_points")) {
    if (!pts->is_array()) throw ConfigError("schedule.decay_points must be an array");
    s.decay_points.clear();
    for (const auto& p : *pts) {
      Fields pf(p, "schedule.decay_points[]");
      DecayPoint dp;
      pf.count("step", dp.step);
      pf.number("factor", dp.factor);
      pf.finish();
      s.decay_points.push_back(dp);
    }
  }
  f.finish();
}

void parse_init(const json& j, InitSpec& init) {
  Fields f(j, "init");
  std::string kind(init_name(init.kind));
  f.string("kind", kind);
  if (kind == "zeros") {
    init.kind = InitSpec::Kind::kZeros;
  } else if (kind == "constant") {
    init.kind = InitSpec::Kind::kConstant;
  } else if (kind == "uniform") {
    init.kind = InitSpec::Kind::kUniform;
  } else {
    throw ConfigError("unknown init.kind '" + kind + "'");
  }
  f.number("value", init.value);
  f.number("scale", init.scale);
  f.finish();
}

json model_json(const ModelConfig& m) {
  json j = {{"n_train", m.n_train}, {"n_test", m.n_test}};
  if (m.kind == ModelConfig::Kind::kLinReg) {
    j["kind"] = "linreg";
    j["dim"] = m.linreg.dim;
    if (!m.linreg.true_weights.empty()) j["true_weights"] = m.linreg.true_weights;
    j["noise_std"] = m.linreg.noise_std;
    j["input_dist"] = input_dist_name(m.linreg.input_dist);
    j["loss"] = loss_name(m.linreg.loss);
  } else {
    j["kind"] = "mlp";
    j["layer_sizes"] = m.mlp.layer_sizes;
    j["label_smoothing"] = m.mlp.label_smoothing;
    j["class_sep"] = m.mlp.class_sep;
    j["blob_std"] = m.mlp.blob_std;
  }
  return j;
}

std::unique_ptr<Model> make_model(const ModelConfig& m) {
  if (m.kind == ModelConfig::Kind::kLinReg) return std::make_unique<LinRegModel>(m.linreg);
  return std::make_unique<MlpModel>(m.mlp);
}

std::pair<Dataset, Dataset> make_data(const ExperimentConfig& c) {
  const auto& m = c.model;
  if (m.kind == ModelConfig::Kind::kLinReg) {
    return gen_linreg_split(m.linreg, m.n_train, m.n_test, c.seeds.data);
  }
  return gen_blob_data(m.mlp, m.n_train, m.n_test, c.seeds.data);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string value_label(double v) { return format_double(v); }

}  // namespace

std::size_t default_device_count(std::size_t global_batch) {
  if (global_batch < 2) throw ConfigError("global_batch must be at least 2");
  for (std::size_t d = 8; d <= global_batch; ++d) {
    if (global_batch % d == 0) return d;
  }
  for (std::size_t d = 2; d < 8 && d <= global_batch; ++d) {
    if (global_batch % d == 0) return d;
  }
  throw ConfigError("global_batch has no divisor usable as a device count");
}

void validate(const ExperimentConfig& c) {
  c.optimizer.validate();
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(c.eps > 0.0)) throw ConfigError("eps must be positive");
  if (c.steps == 0) throw ConfigError("steps must be at least 1");
  if (c.k < 2) throw ConfigError("k must be at least 2");
  if (c.global_batch == 0 || c.global_batch % c.k != 0) {
    throw ConfigError("global_batch " + std::to_string(c.global_batch) +
                      " is not divisible by k " + std::to_string(c.k));
  }
  if (c.model.n_train < c.global_batch) {
    throw ConfigError("model.n_train is smaller than global_batch");
  }
  if (c.model.n_test == 0) throw ConfigError("model.n_test must be positive");
  if (c.model.kind == ModelConfig::Kind::kLinReg) {
    const auto& t = c.model.linreg;
    if (t.dim == 0) throw ConfigError("model.dim must be positive");
    if (!t.true_weights.empty() && t.true_weights.size() != t.dim) {
      throw ConfigError("model.true_weights length differs from model.dim");
    }
    if (!(t.noise_std >= 0.0)) throw ConfigError("model.noise_std must be >= 0");
  } else {
    const auto& t = c.model.mlp;
    if (t.layer_sizes.size() < 2) throw ConfigError("model.layer_sizes needs >= 2 entries");
    for (auto s : t.layer_sizes) {
      if (s == 0) throw ConfigError("model.layer_sizes entries must be positive");
    }
    if (t.num_classes() < 2) throw ConfigError("mlp needs at least 2 classes");
    if (!(t.label_smoothing >= 0.0 && t.label_smoothing < 0.5)) {
      throw ConfigError("model.label_smoothing must lie in [0, 0.5)");
    }
    if (!(t.blob_std > 0.0)) throw ConfigError("model.blob_std must be positive");
  }
  if (c.init.kind == InitSpec::Kind::kUniform && !(c.init.scale >= 0.0)) {
    throw ConfigError("init.scale must be >= 0");
  }
  if (c.lr_scaling.reference_batch == 0) {
    throw ConfigError("lr_scaling.reference_batch must be positive");
  }
  const Schedule s = effective_schedule(c);
  s.validate();
  if (s.total_steps + 1 < c.steps) {
    throw ConfigError("schedule.total_steps is shorter than steps");
  }
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Fields f(j, "config");
  if (const json* m = f.object("model")) parse_model(*m, c.model);
  if (const json* o = f.object("optimizer")) parse_optimizer(*o, c.optimizer);
  if (const json* s = f.object("schedule")) parse_schedule(*s, c.schedule);
  if (const json* i = f.object("init")) parse_init(*i, c.init);
  f.count("k", c.k);
  f.count("global_batch", c.global_batch);
  f.count("steps", c.steps);
  f.number("gamma", c.gamma);
  f.number("eps", c.eps);
  if (const json* s = f.object("seeds")) {
    Fields sf(*s, "seeds");
    sf.count("data", c.seeds.data);
    sf.count("init", c.seeds.init);
    sf.count("shuffle", c.seeds.shuffle);
    sf.finish();
  }
  if (const json* s = f.object("lr_scaling")) {
    Fields sf(*s, "lr_scaling");
    sf.boolean("sqrt", c.lr_scaling.sqrt);
    sf.count("reference_batch", c.lr_scaling.reference_batch);
    sf.finish();
  }
  std::string out = c.output_dir.string();
  f.string("output_dir", out);
  c.output_dir = out;
  f.boolean("record_per_param_gsnr", c.record_per_param_gsnr);
  f.count("per_param_gsnr_limit", c.per_param_gsnr_limit);
  f.finish();

  if (c.k == 0) c.k = default_device_count(c.global_batch);
  if (c.model.n_test == 0) c.model.n_test = c.model.n_train;
  if (c.schedule.total_steps == 0) c.schedule.total_steps = c.steps;
  c.optimizer.gamma = c.gamma;
  c.init.seed = c.seeds.init;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json_text(const ExperimentConfig& c) {
  const auto& o = c.optimizer;
  const auto& s = c.schedule;
  json points = json::array();
  for (const auto& p : s.decay_points) points.push_back({{"step", p.step}, {"factor", p.factor}});
  json j = {
      {"model", model_json(c.model)},
      {"optimizer",
       {{"kind", to_string(o.kind)},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"beta3", o.beta3},
        {"eps_adam", o.eps_adam},
        {"momentum_coef", o.momentum_coef},
        {"trust_eps", o.trust_eps},
        {"weight_decay", o.weight_decay}}},
      {"schedule",
       {{"kind", to_string(s.kind)},
        {"base_lr", s.base_lr},
        {"warmup_steps", s.warmup_steps},
        {"total_steps", s.total_steps},
        {"poly_power", s.poly_power},
        {"decay_points", points}}},
      {"init",
       {{"kind", init_name(c.init.kind)}, {"value", c.init.value}, {"scale", c.init.scale}}},
      {"k", c.k},
      {"global_batch", c.global_batch},
      {"steps", c.steps},
      {"gamma", c.gamma},
      {"eps", c.eps},
      {"seeds", {{"data", c.seeds.data}, {"init", c.seeds.init}, {"shuffle", c.seeds.shuffle}}},
      {"lr_scaling",
       {{"sqrt", c.lr_scaling.sqrt}, {"reference_batch", c.lr_scaling.reference_batch}}},
      {"output_dir", c.output_dir.string()},
      {"record_per_param_gsnr", c.record_per_param_gsnr},
      {"per_param_gsnr_limit", c.per_param_gsnr_limit},
  };
  return j.dump(2) + "\n";
}

Schedule effective_schedule(const ExperimentConfig& c) {
  Schedule s = c.schedule;
  if (s.total_steps == 0) s.total_steps = c.steps;
  if (c.lr_scaling.sqrt) {
    s.base_lr = scaled_lr(s.base_lr, c.global_batch, c.lr_scaling.reference_batch);
  }
  return s;
}

RunResult train(const ExperimentConfig& config, const RecordObserver& observer) {
  ExperimentConfig c = config;
  c.optimizer.gamma = c.gamma;
  c.init.seed = c.seeds.init;
  validate(c);

  const auto model = make_model(c.model);
  const LayerPartition& partition = model->partition();
  const auto [train_set, test_set] = make_data(c);
  const auto train_all = all_indices(train_set.size());
  const auto test_all = all_indices(test_set.size());
  const Schedule schedule = effective_schedule(c);
  const bool per_param =
      c.record_per_param_gsnr && partition.total() <= c.per_param_gsnr_limit;

  ParamVector params = make_params(partition, c.init);
  OptimizerState state = init_state(c.optimizer, params.size());
  GapLedger ledger;

  std::mt19937_64 shuffle_rng(c.seeds.shuffle);
  std::vector<std::size_t> perm = all_indices(train_set.size());
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  std::size_t pos = 0;

  for (std::size_t s = 0; s < c.steps; ++s) {
    if (pos + c.global_batch > perm.size()) {
      std::shuffle(perm.begin(), perm.end(), shuffle_rng);
      pos = 0;
    }
    std::vector<std::size_t> batch(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                                   perm.begin() + static_cast<std::ptrdiff_t>(pos + c.global_batch));
    pos += c.global_batch;

    const ShardPlan plan = shard_batch(std::move(batch), c.k);
    const DeviceGradStats stats = compute_gsnr_field(
        *model, params.values, plan, train_set, partition, c.gamma, c.eps);
    const double lr = lr_at(schedule, s);
    apply_step(c.optimizer, params.values, state, stats.mean, stats.gsnr, lr, partition);

    const double train_loss = model->loss(params.values, train_set, train_all);
    const double test_loss = model->loss(params.values, test_set, test_all);
    if (!std::isfinite(train_loss) || !std::isfinite(test_loss)) {
      throw NumericError("loss became non-finite at step " + std::to_string(s + 1));
    }
    const TrainRecord& rec = record_step(ledger, stats, partition, train_loss,
                                         test_loss, lr, s + 1, per_param);
    if (observer) observer(rec);
  }

  RunResult r;
  r.records = std::move(ledger.records);
  r.final_params = std::move(params.values);
  r.final_train_loss = r.records.back().train_loss;
  r.final_test_loss = r.records.back().test_loss;
  r.gap = r.records.back().gap;
  r.accumulated_gap_est_sgd = ledger.accumulated_gap_est_sgd;
  r.accumulated_gap_est_vrgd = ledger.accumulated_gap_est_vrgd;
  return r;
}

RunResult run_experiment(const ExperimentConfig& config,
                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.json", to_json_text(config));

  std::ofstream jsonl(out_dir / "records.jsonl", std::ios::binary);
  std::ofstream csv(out_dir / "summary.csv", std::ios::binary);
  if (!jsonl || !csv) throw ConfigError("cannot write artifacts in " + out_dir.string());
  csv << kSummaryCsvHeader << '\n';

  RunResult result;
  try {
    result = train(config, [&](const TrainRecord& r) {
      jsonl << record_to_json_line(r) << '\n';
      csv << summary_csv_row(r) << '\n';
    });
  } catch (...) {
    jsonl.flush();
    csv.flush();
    throw;
  }

  const json final_metrics = {
      {"final_train_loss", result.final_train_loss},
      {"final_test_loss", result.final_test_loss},
      {"gap", result.gap},
      {"accumulated_gap_est_sgd", result.accumulated_gap_est_sgd},
      {"accumulated_gap_est_vrgd", result.accumulated_gap_est_vrgd},
      {"steps", result.records.size()},
  };
  write_text(out_dir / "final.json", final_metrics.dump(2) + "\n");
  return result;
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kGamma: return "gamma";
    case SweepAxis::kK: return "k";
    case SweepAxis::kLr: return "lr";
    case SweepAxis::kBatch: return "batch";
  }
  return "unknown";
}

std::optional<SweepAxis> parse_sweep_axis(std::string_view name) {
  for (auto a : {SweepAxis::kGamma, SweepAxis::kK, SweepAxis::kLr, SweepAxis::kBatch}) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

ExperimentConfig with_axis(const ExperimentConfig& config, SweepAxis axis,
                           double value) {
  ExperimentConfig c = config;
  auto as_count = [&](const char* what) {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw ConfigError(std::string(what) + " sweep values must be positive integers");
    }
    return static_cast<std::size_t>(value);
  };
  switch (axis) {
    case SweepAxis::kGamma:
      c.gamma = value;
      c.optimizer.gamma = value;
      break;
    case SweepAxis::kK:
      c.k = as_count("k");
      break;
    case SweepAxis::kLr:
      c.schedule.base_lr = value;
      break;
    case SweepAxis::kBatch:
      c.global_batch = as_count("batch");
      break;
  }
  return c;
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, SweepAxis axis,
                            const std::vector<double>& values,
                            const std::filesystem::path& out_dir) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::filesystem::create_directories(out_dir);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepRow row;
    row.value = values[i];
    try {
      const ExperimentConfig c = with_axis(config, axis, values[i]);
      validate(c);
      const auto sub = out_dir / (std::string(to_string(axis)) + "_" + std::to_string(i));
      const RunResult r = run_experiment(c, sub);
      row.final_test_loss = r.final_test_loss;
      row.gap = r.gap;
    } catch (const Error& e) {
      row.final_test_loss = std::numeric_limits<double>::quiet_NaN();
      row.gap = std::numeric_limits<double>::quiet_NaN();
      row.status = std::string("error: ") + e.what();
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "value,final_test_loss,gap,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (char& ch : status) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    csv << value_label(r.value) << ',' << format_double(r.final_test_loss) << ','
        << format_double(r.gap) << ',' << status << '\n';
  }
  write_text(out_dir / "sweep.csv", csv.str());
  return rows;
}

std::optional<std::size_t> first_step_reaching(const std::vector<TrainRecord>& records,
                                               double target) {
  for (const auto& r : records) {
    if (r.test_loss <= target) return r.step;
  }
  return std::nullopt;
}

ComparisonResult compare(const ExperimentConfig& config,
                         const std::vector<OptimizerKind>& optimizers,
                         const std::filesystem::path& out_dir) {
  if (optimizers.size() < 2) throw ConfigError("compare needs at least two optimizers");
  std::filesystem::create_directories(out_dir);
  ComparisonResult result;
  result.optimizers = optimizers;
  for (OptimizerKind kind : optimizers) {
    ExperimentConfig c = config;
    c.optimizer.kind = kind;
    result.runs.push_back(run_experiment(c, out_dir / std::string(to_string(kind))));
  }

  std::ostringstream csv;
  csv << "step";
  for (auto kind : optimizers) csv << ",test_loss_" << to_string(kind);
  csv << '\n';
  for (std::size_t s = 0; s < config.steps; ++s) {
    csv << result.runs.front().records[s].step;
    for (const auto& run : result.runs) csv << ',' << format_double(run.records[s].test_loss);
    csv << '\n';
  }
  write_text(out_dir / "comparison.csv", csv.str());

  std::ostringstream cross;
  cross << "optimizer,reference,reference_final_test_loss,first_step\n";
  for (std::size_t a = 0; a < optimizers.size(); ++a) {
    for (std::size_t b = 0; b < optimizers.size(); ++b) {
      if (a == b) continue;
      Crossing x{optimizers[a], optimizers[b], result.runs[b].final_test_loss,
                 first_step_reaching(result.runs[a].records, result.runs[b].final_test_loss)};
      cross << to_string(x.optimizer) << ',' << to_string(x.reference) << ','
            << format_double(x.reference_final_test_loss) << ','
            << (x.first_step ? std::to_string(*x.first_step) : std::string()) << '\n';
      result.crossings.push_back(x);
    }
  }
  write_text(out_dir / "crossings.csv", cross.str());
  return result;
}

}  // namespace vrgd
