#pragma once

// A linear "model" whose per-sample gradient is simply that sample's input
// row: loss(theta) = mean_i <theta, x_i>. It lets tests dictate per-sample
// gradients exactly.

#include <span>
#include <utility>

#include "vrgd/models.hpp"

namespace fixture {

class RowGradientModel final : public vrgd::Model {
 public:
  explicit RowGradientModel(vrgd::LayerPartition partition)
      : partition_(std::move(partition)) {}

  const vrgd::LayerPartition& partition() const override { return partition_; }

  double loss(std::span<const double> params, const vrgd::Dataset& data,
              std::span<const std::size_t> indices) const override {
    vrgd::Field g;
    return loss_grad(params, data, indices, g);
  }

  double loss_grad(std::span<const double> params, const vrgd::Dataset& data,
                   std::span<const std::size_t> indices,
                   vrgd::Field& grad) const override {
    grad.assign(params.size(), 0.0);
    double total = 0.0;
    for (auto i : indices) {
      const auto x = data.input(i);
      for (std::size_t j = 0; j < params.size(); ++j) {
        grad[j] += x[j];
        total += params[j] * x[j];
      }
    }
    const double n = static_cast<double>(indices.size());
    for (double& g : grad) g /= n;
    return total / n;
  }

 private:
  vrgd::LayerPartition partition_;
};

// Dataset whose rows are the given per-sample gradients.
inline vrgd::Dataset rows(std::size_t dim, std::vector<double> flat) {
  vrgd::Dataset d;
  d.input_dim = dim;
  d.inputs = std::move(flat);
  return d;
}

}  // namespace fixture
