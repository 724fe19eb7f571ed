#include "vrgd/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "vrgd/errors.hpp"

namespace vrgd {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

namespace {

void check_indices(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw StructuralError("empty batch");
  const std::size_t n = data.size();
  for (auto i : indices) {
    if (i >= n) {
      throw RangeError("sample index " + std::to_string(i) +
                       " outside dataset of size " + std::to_string(n));
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear regression

Field LinRegTask::weights() const {
  if (!true_weights.empty()) {
    if (true_weights.size() != dim) {
      throw ConfigError("true_weights length does not match dim");
    }
    return true_weights;
  }
  Field w(dim);
  for (std::size_t i = 0; i < dim; ++i) w[i] = static_cast<double>(i + 1);
  return w;
}

LinRegModel::LinRegModel(LinRegTask task)
    : task_(std::move(task)), partition_(LayerPartition::single("linear", task_.dim)) {
  if (task_.dim == 0) throw ConfigError("linear regression needs dim >= 1");
}

double LinRegModel::loss(std::span<const double> params, const Dataset& data,
                         std::span<const std::size_t> indices) const {
  require_length(params, partition_, "parameters");
  check_indices(data, indices);
  double total = 0.0;
  for (auto i : indices) {
    const double r = data.targets[i] - dot(params, data.input(i));
    total += task_.loss == RegressionLoss::kMse ? r * r : std::abs(r);
  }
  return total / static_cast<double>(indices.size());
}

double LinRegModel::loss_grad(std::span<const double> params,
                              const Dataset& data,
                              std::span<const std::size_t> indices,
                              Field& grad) const {
  require_length(params, partition_, "parameters");
  check_indices(data, indices);
  const std::size_t d = task_.dim;
  grad.assign(d, 0.0);
  double total = 0.0;
  for (auto i : indices) {
    const auto x = data.input(i);
    const double r = data.targets[i] - dot(params, x);
    double coef;
    if (task_.loss == RegressionLoss::kMse) {
      total += r * r;
      coef = -2.0 * r;
    } else {
      total += std::abs(r);
      coef = r > 0.0 ? -1.0 : (r < 0.0 ? 1.0 : 0.0);
    }
    for (std::size_t j = 0; j < d; ++j) grad[j] += coef * x[j];
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& g : grad) g *= inv;
  return total * inv;
}

LossGrad linreg_loss_grad(std::span<const double> w, const Dataset& batch,
                          RegressionLoss loss) {
  if (batch.size() == 0) throw StructuralError("empty batch");
  LinRegTask task;
  task.dim = w.size();
  task.loss = loss;
  LinRegModel model(task);
  const auto idx = all_indices(batch.size());
  LossGrad out;
  out.loss = model.loss_grad(w, batch, idx, out.grad);
  return out;
}

namespace {

void append_linreg_samples(const LinRegTask& task, const Field& w,
                           std::size_t n, std::mt19937_64& rng, Dataset& out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(task.dim);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto& v : x) {
      v = task.input_dist == InputDistribution::kStandardNormal ? normal(rng)
                                                                : unit(rng);
    }
    double y = dot(w, x);
    if (task.noise_std > 0.0) y += task.noise_std * normal(rng);
    out.inputs.insert(out.inputs.end(), x.begin(), x.end());
    out.targets.push_back(y);
  }
}

}  // namespace

Dataset gen_linreg_data(const LinRegTask& task, std::size_t n,
                        std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be positive");
  if (task.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  const Field w = task.weights();
  Dataset out{task.dim, 1, {}, {}, {}, seed};
  out.inputs.reserve(n * task.dim);
  out.targets.reserve(n);
  std::mt19937_64 rng(seed);
  append_linreg_samples(task, w, n, rng, out);
  return out;
}

std::pair<Dataset, Dataset> gen_linreg_split(const LinRegTask& task,
                                             std::size_t n_train,
                                             std::size_t n_test,
                                             std::uint64_t seed) {
  if (n_train == 0 || n_test == 0) {
    throw ConfigError("train and test sizes must be positive");
  }
  if (task.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  const Field w = task.weights();
  std::mt19937_64 rng(seed);
  Dataset train{task.dim, 1, {}, {}, {}, seed};
  Dataset test{task.dim, 1, {}, {}, {}, seed};
  append_linreg_samples(task, w, n_train, rng, train);
  append_linreg_samples(task, w, n_test, rng, test);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// MLP

LayerPartition mlp_partition(const MlpTask& task) {
  if (task.layer_sizes.size() < 2) {
    throw ConfigError("MLP needs at least an input and an output layer");
  }
  for (auto s : task.layer_sizes) {
    if (s == 0) throw ConfigError("MLP layer sizes must be positive");
  }
  if (task.num_classes() < 2) {
    throw ConfigError("MLP output layer must have at least 2 classes");
  }
  std::vector<std::pair<std::string, std::size_t>> layers;
  for (std::size_t l = 0; l + 1 < task.layer_sizes.size(); ++l) {
    const auto in = task.layer_sizes[l];
    const auto out = task.layer_sizes[l + 1];
    const auto prefix = "fc" + std::to_string(l + 1);
    layers.emplace_back(prefix + ".weight", in * out);
    layers.emplace_back(prefix + ".bias", out);
  }
  return LayerPartition::from_lengths(layers);
}

std::vector<double> smoothed_target(int label, std::size_t num_classes,
                                    double eps) {
  std::vector<double> t(num_classes, eps / static_cast<double>(num_classes));
  t.at(static_cast<std::size_t>(label)) += 1.0 - eps;
  return t;
}

MlpModel::MlpModel(MlpTask task)
    : task_(std::move(task)), partition_(mlp_partition(task_)) {
  if (!(task_.label_smoothing >= 0.0 && task_.label_smoothing < 0.5)) {
    throw ConfigError("label_smoothing must be in [0, 0.5)");
  }
}

double MlpModel::forward_backward(std::span<const double> params,
                                  const Dataset& data,
                                  std::span<const std::size_t> indices,
                                  Field* grad) const {
  require_length(params, partition_, "parameters");
  check_indices(data, indices);
  if (data.input_dim != task_.input_dim()) {
    throw StructuralError("dataset input_dim does not match MLP input layer");
  }
  const auto& sizes = task_.layer_sizes;
  const std::size_t n_layers = sizes.size() - 1;
  const std::size_t C = task_.num_classes();
  const auto& segs = partition_.segments();

  if (grad) grad->assign(partition_.total(), 0.0);

  // acts[0] is the input, acts[l] the tanh output of layer l (logits for the
  // last layer are kept separately).
  std::vector<std::vector<double>> acts(n_layers + 1);
  for (std::size_t l = 0; l <= n_layers; ++l) acts[l].resize(sizes[l]);
  std::vector<double> delta, prev_delta, probs(C);

  double total = 0.0;
  for (auto i : indices) {
    const auto x = data.input(i);
    std::copy(x.begin(), x.end(), acts[0].begin());
    for (std::size_t l = 0; l < n_layers; ++l) {
      const double* W = params.data() + segs[2 * l].offset;
      const double* b = params.data() + segs[2 * l + 1].offset;
      const std::size_t in = sizes[l], out = sizes[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double z = b[o];
        for (std::size_t k = 0; k < in; ++k) z += W[o * in + k] * acts[l][k];
        acts[l + 1][o] = (l + 1 < n_layers) ? std::tanh(z) : z;
        if (!std::isfinite(acts[l + 1][o])) {
          throw NumericError("non-finite activation",
                             "fc" + std::to_string(l + 1));
        }
      }
    }
    const auto& logits = acts[n_layers];
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits[c] - mx);
    const double log_z = mx + std::log(z);
    const int label = data.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= C) {
      throw RangeError("label " + std::to_string(label) + " out of range");
    }
    const auto target = smoothed_target(label, C, task_.label_smoothing);
    for (std::size_t c = 0; c < C; ++c) {
      const double log_p = logits[c] - log_z;
      total -= target[c] * log_p;
      probs[c] = std::exp(log_p);
    }
    if (!grad) continue;

    delta.resize(C);
    for (std::size_t c = 0; c < C; ++c) delta[c] = probs[c] - target[c];
    for (std::size_t l = n_layers; l-- > 0;) {
      const std::size_t in = sizes[l], out = sizes[l + 1];
      const double* W = params.data() + segs[2 * l].offset;
      double* gW = grad->data() + segs[2 * l].offset;
      double* gb = grad->data() + segs[2 * l + 1].offset;
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        for (std::size_t k = 0; k < in; ++k) gW[o * in + k] += delta[o] * acts[l][k];
      }
      if (l == 0) break;
      prev_delta.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t k = 0; k < in; ++k) prev_delta[k] += W[o * in + k] * delta[o];
      }
      for (std::size_t k = 0; k < in; ++k) {
        const double h = acts[l][k];
        prev_delta[k] *= 1.0 - h * h;
      }
      delta.swap(prev_delta);
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  if (grad) {
    for (auto& g : *grad) g *= inv;
  }
  return total * inv;
}

double MlpModel::loss(std::span<const double> params, const Dataset& data,
                      std::span<const std::size_t> indices) const {
  return forward_backward(params, data, indices, nullptr);
}

double MlpModel::loss_grad(std::span<const double> params, const Dataset& data,
                           std::span<const std::size_t> indices,
                           Field& grad) const {
  return forward_backward(params, data, indices, &grad);
}

double MlpModel::accuracy(std::span<const double> params,
                          const Dataset& data) const {
  require_length(params, partition_, "parameters");
  const auto& sizes = task_.layer_sizes;
  const std::size_t n_layers = sizes.size() - 1;
  const auto& segs = partition_.segments();
  std::size_t correct = 0;
  std::vector<double> cur, next;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    cur.assign(x.begin(), x.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
      const double* W = params.data() + segs[2 * l].offset;
      const double* b = params.data() + segs[2 * l + 1].offset;
      const std::size_t in = sizes[l], out = sizes[l + 1];
      next.assign(out, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double z = b[o];
        for (std::size_t k = 0; k < in; ++k) z += W[o * in + k] * cur[k];
        next[o] = (l + 1 < n_layers) ? std::tanh(z) : z;
      }
      cur.swap(next);
    }
    const auto pred = std::distance(cur.begin(), std::max_element(cur.begin(), cur.end()));
    if (pred == data.labels[i]) ++correct;
  }
  return data.size() == 0 ? 0.0
                          : static_cast<double>(correct) / static_cast<double>(data.size());
}

LossGrad mlp_loss_grad(const MlpTask& task, std::span<const double> theta,
                       const Dataset& batch) {
  MlpModel model(task);
  const auto idx = all_indices(batch.size());
  LossGrad out;
  out.loss = model.loss_grad(theta, batch, idx, out.grad);
  return out;
}

namespace {

std::vector<double> class_mean(const MlpTask& task, std::size_t c) {
  const std::size_t d = task.input_dim();
  std::vector<double> mu(d, 0.0);
  if (task.num_classes() == 2) {
    const double v = task.class_sep / std::sqrt(static_cast<double>(d));
    std::fill(mu.begin(), mu.end(), c == 0 ? v : -v);
  } else {
    mu[c % d] = task.class_sep;
  }
  return mu;
}

void append_blobs(const MlpTask& task, std::size_t n, std::mt19937_64& rng,
                  Dataset& out) {
  const std::size_t C = task.num_classes();
  std::uniform_int_distribution<int> pick(0, static_cast<int>(C) - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < C; ++c) means.push_back(class_mean(task, c));
  for (std::size_t s = 0; s < n; ++s) {
    const int label = pick(rng);
    for (double m : means[static_cast<std::size_t>(label)]) {
      out.inputs.push_back(m + task.blob_std * normal(rng));
    }
    out.labels.push_back(label);
  }
}

}  // namespace

std::pair<Dataset, Dataset> gen_blob_data(const MlpTask& task,
                                          std::size_t n_train,
                                          std::size_t n_test,
                                          std::uint64_t seed) {
  if (n_train == 0 || n_test == 0) {
    throw ConfigError("train and test sizes must be positive");
  }
  if (task.blob_std < 0.0) throw ConfigError("blob_std must be >= 0");
  mlp_partition(task);  // validates layer sizes
  std::mt19937_64 rng(seed);
  Dataset train{task.input_dim(), 0, {}, {}, {}, seed};
  Dataset test{task.input_dim(), 0, {}, {}, {}, seed};
  append_blobs(task, n_train, rng, train);
  append_blobs(task, n_test, rng, test);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// CSV

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << std::setprecision(17);
  const bool classification = data.targets.empty();
  for (std::size_t j = 0; j < data.input_dim; ++j) os << (j ? "," : "") << "x_" << j;
  if (classification) {
    os << ",label\n";
  } else {
    for (std::size_t j = 0; j < data.target_dim; ++j) os << ",y_" << j;
    os << '\n';
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    for (std::size_t j = 0; j < x.size(); ++j) os << (j ? "," : "") << x[j];
    if (classification) {
      os << ',' << data.labels[i];
    } else {
      for (std::size_t j = 0; j < data.target_dim; ++j) {
        os << ',' << data.targets[i * data.target_dim + j];
      }
    }
    os << '\n';
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw StructuralError("empty CSV " + path.string());
  Dataset out;
  std::size_t n_x = 0, n_y = 0;
  bool classification = false;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("x_", 0) == 0) ++n_x;
      else if (col.rfind("y_", 0) == 0) ++n_y;
      else if (col == "label") classification = true;
      else throw StructuralError("unknown CSV column '" + col + "'");
    }
  }
  out.input_dim = n_x;
  out.target_dim = n_y;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col < n_x) out.inputs.push_back(std::stod(cell));
      else if (classification) out.labels.push_back(std::stoi(cell));
      else out.targets.push_back(std::stod(cell));
      ++col;
    }
    if (col != n_x + (classification ? 1 : n_y)) {
      throw StructuralError("ragged CSV row in " + path.string());
    }
  }
  return out;
}

}  // namespace vrgd
