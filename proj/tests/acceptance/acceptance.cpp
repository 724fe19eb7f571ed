// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
// usage: vrgd_acceptance [scratch_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vrgd/diagnostics.hpp"
#include "vrgd/experiment.hpp"
#include "vrgd/grad_pipeline.hpp"
#include "vrgd/models.hpp"
#include "vrgd/optimizers.hpp"

using namespace vrgd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_scratch;
// Records of every VR-SGD run made by criteria 5-8, checked by criterion 10.
std::vector<std::vector<TrainRecord>> g_vr_sgd_runs;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void remember_if_vr_sgd(const ExperimentConfig& c, const std::vector<TrainRecord>& r) {
  if (c.optimizer.kind == OptimizerKind::kVrSgd) g_vr_sgd_runs.push_back(r);
}

// ---------------------------------------------------------------------------

Outcome reduction_identities() {
  MlpTask task;
  task.layer_sizes = {8, 16, 3};
  const MlpModel model(task);
  const auto [train, test] = gen_blob_data(task, 1024, 16, 11);
  const auto& part = model.partition();
  double worst = 0.0;
  for (auto vr : {OptimizerKind::kVrSgd, OptimizerKind::kVrMomentum, OptimizerKind::kVrAdam,
                  OptimizerKind::kVrLars, OptimizerKind::kVrLamb}) {
    OptimizerConfig vc, bc;
    vc.kind = vr;
    vc.gamma = 1.0;
    bc.kind = base_of(vr);
    const double lr = (vr == OptimizerKind::kVrSgd || vr == OptimizerKind::kVrMomentum) ? 0.1 : 0.01;
    Field pv = make_params(part, InitSpec::uniform(0.3, 5)).values, pb = pv;
    auto sv = init_state(vc, pv.size()), sb = init_state(bc, pb.size());
    std::mt19937_64 rng(21);
    auto order = all_indices(train.size());
    for (int step = 0; step < 100; ++step) {
      if (step % 16 == 0) std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::size_t> batch(order.begin() + (step % 16) * 64,
                                     order.begin() + (step % 16 + 1) * 64);
      const auto plan = shard_batch(batch, 8);
      const auto stv = compute_gsnr_field(model, pv, plan, train, part, 1.0);
      const auto stb = compute_gsnr_field(model, pb, plan, train, part, 1.0);
      apply_step(vc, pv, sv, stv.mean, stv.gsnr, lr, part);
      apply_step(bc, pb, sb, stb.mean, {}, lr, part);
      for (std::size_t j = 0; j < pv.size(); ++j) worst = std::max(worst, std::abs(pv[j] - pb[j]));
    }
  }
  return {worst <= 1e-12, "max |theta_vr - theta_base| over 5 pairs x 100 steps = " + fmt(worst)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> kdist(2, 64), ldist(1, 200);
  double worst_var = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int k = kdist(rng), len = ldist(rng);
    std::vector<Field> devices;
    for (int d = 0; d < k; ++d) devices.push_back(oracle::random_vec(rng, len, -1.0, 1.0));
    const auto v = reduce_stats(devices).variance;
    const auto ref = oracle::two_pass_variance(devices);
    for (int j = 0; j < len; ++j) worst_var = std::max(worst_var, oracle::rel_err(v[j], ref[j]));
  }

  const LayerPartition part = LayerPartition::from_lengths({{"a", 4}, {"b", 7}});
  double worst_opt = 0.0;
  {
    OptimizerConfig c;
    c.kind = OptimizerKind::kAdam;
    Field p = oracle::random_vec(rng, 11), q = p;
    auto st = init_state(c, 11);
    oracle::Adam ref;
    for (int s = 0; s < 100; ++s) {
      const auto g = oracle::random_vec(rng, 11, -2, 2);
      adam_step(p, st, g, 0.01, c);
      ref.step(q, g, 0.01);
      for (int j = 0; j < 11; ++j) worst_opt = std::max(worst_opt, oracle::rel_err(p[j], q[j]));
    }
  }
  std::vector<oracle::Layer> layers{{0, 4}, {4, 7}};
  {
    OptimizerConfig c;
    c.kind = OptimizerKind::kLamb;
    Field p = oracle::random_vec(rng, 11), q = p;
    auto st = init_state(c, 11);
    oracle::Lamb ref;
    for (int s = 0; s < 100; ++s) {
      const auto g = oracle::random_vec(rng, 11, -2, 2);
      lamb_step(p, st, g, 0.01, c, part);
      ref.step(q, g, 0.01, layers);
      for (int j = 0; j < 11; ++j) worst_opt = std::max(worst_opt, oracle::rel_err(p[j], q[j]));
    }
  }
  {
    OptimizerConfig c;
    c.kind = OptimizerKind::kLars;
    Field p = oracle::random_vec(rng, 11), q = p;
    auto st = init_state(c, 11);
    oracle::Lars ref;
    for (int s = 0; s < 100; ++s) {
      const auto g = oracle::random_vec(rng, 11, -2, 2);
      lars_step(p, st, g, 0.01, c, part);
      ref.step(q, g, 0.01, layers);
      for (int j = 0; j < 11; ++j) worst_opt = std::max(worst_opt, oracle::rel_err(p[j], q[j]));
    }
  }
  return {worst_var <= 1e-12 && worst_opt <= 1e-12,
          "variance rel err " + fmt(worst_var) + ", Adam/LAMB/LARS rel err " + fmt(worst_opt)};
}

double fd_worst(const Model& model, const Dataset& data, std::uint64_t seed,
                double scale, int probes) {
  std::mt19937_64 rng(seed);
  const auto idx = all_indices(data.size());
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const auto theta = oracle::random_vec(rng, model.param_count(), -scale, scale);
    Field grad;
    model.loss_grad(theta, data, idx, grad);
    std::uniform_int_distribution<std::size_t> pick(0, theta.size() - 1);
    const std::size_t j = pick(rng);
    const double fd = oracle::central_difference(
        [&](const oracle::Vec& t) { return model.loss(t, data, idx); }, theta, j, 1e-5);
    const double denom = std::max({std::abs(fd), std::abs(grad[j]), 1e-8});
    worst = std::max(worst, std::abs(fd - grad[j]) / denom);
  }
  return worst;
}

Outcome gradient_correctness() {
  LinRegTask lt;
  const double lin = fd_worst(LinRegModel(lt), gen_linreg_data(lt, 128, 3), 31, 3.0, 25);
  MlpTask mt;
  const auto [train, test] = gen_blob_data(mt, 64, 8, 4);
  const double mlp = fd_worst(MlpModel(mt), train, 37, 0.5, 25);
  return {lin <= 1e-6 && mlp <= 1e-6,
          "25 probes each: linreg rel err " + fmt(lin) + ", mlp rel err " + fmt(mlp)};
}

Outcome gsnr_field_contract() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> kdist(2, 64), nlayers(1, 5), len(1, 40);
  std::uniform_real_distribution<double> gdist(0.01, 1.0);
  double worst_mean = 0.0, worst_scale = 0.0;
  bool in_range = true;
  for (int inst = 0; inst < 1000; ++inst) {
    std::vector<std::pair<std::string, std::size_t>> layers;
    const int nl = nlayers(rng);
    for (int l = 0; l < nl; ++l) layers.emplace_back("l" + std::to_string(l), len(rng));
    const auto part = LayerPartition::from_lengths(layers);
    const int k = kdist(rng);
    std::vector<Field> devices;
    for (int d = 0; d < k; ++d) devices.push_back(oracle::random_vec(rng, part.total(), -1.0, 1.5));
    const double gamma = gdist(rng);
    const auto s = gsnr_from_device_means(devices, part, gamma);
    for (const auto& seg : part.segments()) {
      double raw = 0.0, norm = 0.0;
      for (std::size_t j = seg.offset; j < seg.offset + seg.length; ++j) {
        raw += s.gsnr_raw[j];
        norm += s.gsnr_normalized[j];
      }
      const double n = static_cast<double>(seg.length);
      if (raw / n > kLayerMeanFloor) worst_mean = std::max(worst_mean, std::abs(norm / n - 1.0));
    }
    for (double r : s.gsnr) in_range = in_range && r >= gamma && r <= 1.0;
  }
  // Scale invariance holds in the eps -> 0 limit, so it is checked on fields
  // whose device variance dwarfs eps: k >= 8 devices with O(1) spread.
  std::uniform_int_distribution<int> kbig(8, 64);
  std::normal_distribution<double> normal(0.5, 3.0);
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = len(rng);
    const auto part = LayerPartition::single("w", n);
    std::vector<Field> devices(kbig(rng), Field(n));
    for (auto& d : devices) for (double& x : d) x = normal(rng);
    const auto base = gsnr_from_device_means(devices, part, 0.1);
    for (double c : {0.1, 3.0, 100.0}) {
      auto scaled = devices;
      for (auto& d : scaled) for (double& x : d) x *= c;
      const auto s = gsnr_from_device_means(scaled, part, 0.1);
      for (std::size_t j = 0; j < n; ++j) {
        worst_scale = std::max(worst_scale, oracle::rel_err(s.gsnr_raw[j], base.gsnr_raw[j]));
      }
    }
  }
  return {worst_mean <= 1e-12 && in_range && worst_scale <= 1e-9,
          "layer mean err " + fmt(worst_mean) + ", clamp range " +
              (in_range ? "ok" : "violated") + ", scale rel err " + fmt(worst_scale)};
}

ExperimentConfig fig_config() {
  return load_config(fs::path(VRGD_CONFIG_DIR) / "linreg_fig.json");
}

RunResult g_fig_vr;  // shared by criteria 5 and 6

Outcome convergence_reproduction() {
  auto c = fig_config();
  c.optimizer.kind = OptimizerKind::kSgd;
  const auto sgd = train(c);
  c.optimizer.kind = OptimizerKind::kVrSgd;
  g_fig_vr = train(c);
  remember_if_vr_sgd(c, g_fig_vr.records);
  const auto step = first_step_reaching(g_fig_vr.records, sgd.final_test_loss);
  return {step && *step <= 60,
          "SGD step-100 test loss " + fmt(sgd.final_test_loss) + "; VR-SGD reaches it at step " +
              (step ? std::to_string(*step) : std::string("never"))};
}

Outcome gsnr_ordering() {
  if (g_fig_vr.records.empty()) return {false, "criterion 5 run missing"};
  const std::vector<std::size_t> idx{4, 0};
  const auto norm = gsnr_trajectory(g_fig_vr.records, idx, GsnrSeries::kNormalized);
  const auto raw = gsnr_trajectory(g_fig_vr.records, idx, GsnrSeries::kRaw);
  // +1 converts record positions to step numbers
  const auto w5 = first_exceedance_of_median(norm[0]) + 1;
  const auto w1 = first_exceedance_of_median(norm[1]) + 1;
  const auto w5_raw = first_exceedance_of_median(raw[0]) + 1;
  const auto w1_raw = first_exceedance_of_median(raw[1]) + 1;
  return {w5 < w1, "normalized GSNR first above run-median: w5 step " + std::to_string(w5) +
                       ", w1 step " + std::to_string(w1) + " (unnormalized: w5 " +
                       std::to_string(w5_raw) + ", w1 " + std::to_string(w1_raw) + ")"};
}

ExperimentConfig sensitivity_config() {
  return load_config(fs::path(VRGD_CONFIG_DIR) / "linreg_sensitivity.json");
}

std::vector<double> run_sweep(SweepAxis axis, const std::vector<double>& values,
                              std::string& table) {
  const auto base = sensitivity_config();
  const auto rows = sweep(base, axis, values, g_scratch / ("sweep_" + std::string(to_string(axis))));
  std::vector<double> losses;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    losses.push_back(rows[i].status == "ok" ? rows[i].final_test_loss : INFINITY);
    table += (i ? ", " : "") + fmt(values[i]) + ":" + fmt(rows[i].final_test_loss);
    // reload the records for the estimator check
    const auto dir = g_scratch / ("sweep_" + std::string(to_string(axis))) /
                     (std::string(to_string(axis)) + "_" + std::to_string(i));
    std::ifstream jsonl(dir / "records.jsonl");
    std::vector<TrainRecord> recs;
    std::string line;
    while (std::getline(jsonl, line)) recs.push_back(record_from_json_line(line));
    remember_if_vr_sgd(with_axis(base, axis, values[i]), recs);
  }
  return losses;
}

Outcome gamma_sensitivity() {
  const std::vector<double> gammas{0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::string table;
  const auto losses = run_sweep(SweepAxis::kGamma, gammas, table);
  const auto best = gammas[std::min_element(losses.begin(), losses.end()) - losses.begin()];
  const bool ok = best > 0.04 && best < 0.2 && losses[5] > losses[2];
  return {ok, "argmin gamma " + fmt(best) + "; final test loss {" + table + "}"};
}

Outcome k_sensitivity() {
  const std::vector<double> ks{2, 8, 32, 64, 256, 1024};
  std::string table;
  const auto losses = run_sweep(SweepAxis::kK, ks, table);
  const auto best = ks[std::min_element(losses.begin(), losses.end()) - losses.begin()];
  return {best >= 32 && best <= 256, "argmin k " + fmt(best) + "; final test loss {" + table + "}"};
}

Outcome gap_monte_carlo() {
  LinRegTask task;
  task.dim = 3;
  task.noise_std = 0.1;
  const LinRegModel model(task);
  const Sampler sampler = [&](std::size_t n, std::uint64_t seed) {
    return gen_linreg_data(task, n, seed);
  };
  const auto a = one_step_gap_mc(model, sampler, task.weights(), 1e-4, 64, 5000, 1000);
  const auto b = one_step_gap_mc(model, sampler, task.weights(), 1e-4, 128, 5000, 1000);
  const double ratio = a.measured / a.predicted;
  const double halving = b.predicted / a.predicted;
  return {ratio >= 0.9 && ratio <= 1.1 && std::abs(halving - 0.5) <= 0.075,
          "measured/predicted " + fmt(ratio) + " (measured " + fmt(a.measured) +
              ", predicted " + fmt(a.predicted) + "); predicted(2n)/predicted(n) " + fmt(halving)};
}

Outcome estimator_inequality() {
  if (g_vr_sgd_runs.empty()) return {false, "no VR-SGD runs recorded"};
  std::size_t steps = 0, violations = 0;
  for (const auto& run : g_vr_sgd_runs) {
    for (const auto& r : run) {
      ++steps;
      if (r.gap_est_vrgd_increment > r.gap_est_sgd_increment) ++violations;
      if (r.gap_est_vrgd > r.gap_est_sgd) ++violations;
    }
  }
  return {violations == 0, std::to_string(g_vr_sgd_runs.size()) + " VR-SGD runs, " +
                               std::to_string(steps) + " steps, " + std::to_string(violations) +
                               " violations"};
}

Outcome determinism() {
  const fs::path cfg = fs::path(VRGD_CONFIG_DIR) / "linreg_fig.json";
  std::string summaries[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = g_scratch / ("determinism_" + std::to_string(i));
    fs::remove_all(out);
    const std::string cmd = std::string("\"") + VRGD_CLI_PATH + "\" run --config \"" +
                            cfg.string() + "\" --output \"" + out.string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "vrgd run exited non-zero"};
    summaries[i] = slurp(out / "summary.csv");
  }
  const bool same = !summaries[0].empty() && summaries[0] == summaries[1];
  return {same, same ? "summary.csv identical (" + std::to_string(summaries[0].size()) + " bytes)"
                     : "summary.csv differs"};
}

}  // namespace

int main(int argc, char** argv) {
  g_scratch = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "vrgd_acceptance";
  fs::create_directories(g_scratch);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"reduction identities", reduction_identities},
      {"oracle equivalence", oracle_equivalence},
      {"gradient correctness", gradient_correctness},
      {"GSNR field contract", gsnr_field_contract},
      {"linreg convergence", convergence_reproduction},
      {"linreg GSNR ordering", gsnr_ordering},
      {"gamma sensitivity", gamma_sensitivity},
      {"k sensitivity", k_sensitivity},
      {"one-step gap Monte-Carlo", gap_monte_carlo},
      {"gap estimator inequality", estimator_inequality},
      {"CLI determinism", determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << (i + 1) << " [" << criteria[i].first << "]: "
              << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << " (" << fmt(secs) << " s)"
              << std::endl;
    failures += o.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
