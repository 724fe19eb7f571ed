#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "vrgd/params.hpp"

namespace vrgd {

/// Sample-major data. Regression targets live in `targets`
/// (`target_dim` per sample); classification tasks fill `labels` instead.
struct Dataset {
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<int> labels;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept {
    return input_dim == 0 ? 0 : inputs.size() / input_dim;
  }
  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * input_dim, input_dim};
  }
};

/// [0, n) in order.
std::vector<std::size_t> all_indices(std::size_t n);

struct LossGrad {
  double loss = 0.0;
  Field grad;
};

/// A differentiable model evaluated on index subsets of a dataset. Losses and
/// gradients are averages over the selected samples. Implementations are pure
/// and safe to call concurrently.
class Model {
 public:
  virtual ~Model() = default;

  virtual const LayerPartition& partition() const = 0;

  virtual double loss(std::span<const double> params, const Dataset& data,
                      std::span<const std::size_t> indices) const = 0;

  /// Writes the mean gradient into `grad` (resized to the parameter count)
  /// and returns the mean loss.
  virtual double loss_grad(std::span<const double> params, const Dataset& data,
                           std::span<const std::size_t> indices,
                           Field& grad) const = 0;

  std::size_t param_count() const { return partition().total(); }
};

// ---------------------------------------------------------------------------
// Linear regression

enum class InputDistribution { kStandardNormal, kUniform01 };

enum class RegressionLoss {
  kMse,  // (y - w.x)^2 per sample
  kAbs,  // |y - w.x| per sample, the unsquared-norm reading
};

struct LinRegTask {
  std::size_t dim = 10;
  Field true_weights;  // empty means W_i = i for i in [1, dim]
  double noise_std = 0.1;
  InputDistribution input_dist = InputDistribution::kStandardNormal;
  RegressionLoss loss = RegressionLoss::kMse;

  /// true_weights, or 1..dim when unset.
  Field weights() const;
};

class LinRegModel final : public Model {
 public:
  explicit LinRegModel(LinRegTask task);

  const LayerPartition& partition() const override { return partition_; }
  double loss(std::span<const double> params, const Dataset& data,
              std::span<const std::size_t> indices) const override;
  double loss_grad(std::span<const double> params, const Dataset& data,
                   std::span<const std::size_t> indices,
                   Field& grad) const override;

  const LinRegTask& task() const noexcept { return task_; }

 private:
  LinRegTask task_;
  LayerPartition partition_;
};

/// Mean loss and analytic gradient of the linear model over the whole `batch`.
LossGrad linreg_loss_grad(std::span<const double> w, const Dataset& batch,
                          RegressionLoss loss = RegressionLoss::kMse);

/// X from the task's input distribution, y = W.x + noise_std * N(0, 1).
Dataset gen_linreg_data(const LinRegTask& task, std::size_t n,
                        std::uint64_t seed);

/// Train and test sets drawn from one stream, so they are disjoint draws.
std::pair<Dataset, Dataset> gen_linreg_split(const LinRegTask& task,
                                             std::size_t n_train,
                                             std::size_t n_test,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tanh MLP classifier

struct MlpTask {
  std::vector<std::size_t> layer_sizes{20, 32, 2};
  double label_smoothing = 0.0;  // in [0, 0.5)
  double class_sep = 1.0;        // distance of each class mean from origin
  double blob_std = 1.0;

  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t input_dim() const { return layer_sizes.front(); }
};

/// Layers named fc<l>.weight (row-major out x in) and fc<l>.bias, l from 1.
LayerPartition mlp_partition(const MlpTask& task);

class MlpModel final : public Model {
 public:
  explicit MlpModel(MlpTask task);

  const LayerPartition& partition() const override { return partition_; }
  double loss(std::span<const double> params, const Dataset& data,
              std::span<const std::size_t> indices) const override;
  double loss_grad(std::span<const double> params, const Dataset& data,
                   std::span<const std::size_t> indices,
                   Field& grad) const override;

  /// Fraction of samples whose arg-max logit equals the label.
  double accuracy(std::span<const double> params, const Dataset& data) const;

  const MlpTask& task() const noexcept { return task_; }

 private:
  double forward_backward(std::span<const double> params, const Dataset& data,
                          std::span<const std::size_t> indices,
                          Field* grad) const;

  MlpTask task_;
  LayerPartition partition_;
};

/// Cross-entropy loss and backprop gradient over the whole `batch`.
LossGrad mlp_loss_grad(const MlpTask& task, std::span<const double> theta,
                       const Dataset& batch);

/// Smoothed target distribution (1 - eps) * onehot + eps / C.
std::vector<double> smoothed_target(int label, std::size_t num_classes,
                                    double eps);

/// Gaussian blobs, one per class. Two classes sit at +/- class_sep along the
/// unit diagonal; with more classes, class c is centred at class_sep * e_c.
/// Train and test come from the same class-conditional distributions.
std::pair<Dataset, Dataset> gen_blob_data(const MlpTask& task,
                                          std::size_t n_train,
                                          std::size_t n_test,
                                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV dump/load: header x_0..x_{d-1}, then y_0.. (regression) or label.

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace vrgd
