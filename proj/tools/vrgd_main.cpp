// vrgd: run, sweep and compare GSNR-scaled optimizers on toy problems.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vrgd/errors.hpp"
#include "vrgd/experiment.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw vrgd::ConfigError("bad sweep value '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

vrgd::ExperimentConfig load(const std::string& path, const std::string& out) {
  auto c = vrgd::load_config(path);
  if (!out.empty()) c.output_dir = out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GSNR-scaled optimizers on a simulated data-parallel pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;

  auto* run = app.add_subcommand("run", "train once and write artifacts");
  run->add_option("--config", config_path, "experiment JSON")->required();
  run->add_option("--output", output, "override output_dir");

  std::string axis;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "vary one setting, fixing everything else");
  sweep->add_option("--config", config_path, "experiment JSON")->required();
  sweep->add_option("--axis", axis, "gamma, k, lr or batch")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--output", output, "override output_dir");

  std::string optimizers;
  auto* compare = app.add_subcommand("compare", "train several optimizers on identical data");
  compare->add_option("--config", config_path, "experiment JSON")->required();
  compare->add_option("--optimizers", optimizers, "comma-separated optimizer names")->required();
  compare->add_option("--output", output, "override output_dir");

  auto* validate = app.add_subcommand("validate", "parse and check a config");
  validate->add_option("--config", config_path, "experiment JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto c = load(config_path, output);
      const auto r = vrgd::run_experiment(c, c.output_dir);
      std::cout << "final_train_loss " << vrgd::format_double(r.final_train_loss) << '\n'
                << "final_test_loss " << vrgd::format_double(r.final_test_loss) << '\n'
                << "artifacts " << c.output_dir.string() << '\n';
    } else if (*sweep) {
      const auto c = load(config_path, output);
      const auto parsed_axis = vrgd::parse_sweep_axis(axis);
      if (!parsed_axis) throw vrgd::ConfigError("unknown sweep axis '" + axis + "'");
      const auto rows = vrgd::sweep(c, *parsed_axis, parse_values(values), c.output_dir);
      bool ok = true;
      for (const auto& row : rows) {
        std::cout << axis << "=" << row.value << " test_loss "
                  << vrgd::format_double(row.final_test_loss) << ' ' << row.status << '\n';
        ok = ok && row.status == "ok";
      }
      return ok ? EXIT_SUCCESS : EXIT_FAILURE;
    } else if (*compare) {
      const auto c = load(config_path, output);
      std::vector<vrgd::OptimizerKind> kinds;
      for (const auto& name : split_list(optimizers)) {
        const auto kind = vrgd::parse_optimizer_kind(name);
        if (!kind) throw vrgd::ConfigError("unknown optimizer '" + name + "'");
        kinds.push_back(*kind);
      }
      const auto result = vrgd::compare(c, kinds, c.output_dir);
      for (const auto& x : result.crossings) {
        std::cout << vrgd::to_string(x.optimizer) << " reaches final loss of "
                  << vrgd::to_string(x.reference) << " at step "
                  << (x.first_step ? std::to_string(*x.first_step) : "never") << '\n';
      }
    } else if (*validate) {
      const auto c = vrgd::load_config(config_path);
      std::cout << "ok: " << vrgd::to_string(c.optimizer.kind) << ", k=" << c.k
                << ", global_batch=" << c.global_batch << ", steps=" << c.steps << '\n';
    }
  } catch (const vrgd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
