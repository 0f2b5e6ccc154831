#pragma once

#include <span>
#include <vector>

namespace fundascreen::nn {

struct LossResult {
  double value = 0.0;
  std::vector<std::vector<double>> grad;  // same layout as the predictions
};

// Mean squared residual over all examples and targets.
LossResult loss_mse(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> target);

// Mean over the batch of class_weight[y] * -log softmax(logits)[y].
// Softmax is computed with max subtraction.
LossResult loss_weighted_ce(std::span<const std::vector<double>> logits, std::span<const int> classes,
                            std::span<const double> class_weights);

std::vector<double> softmax(std::span<const double> logits);

// Per-class weights proportional to count^exponent, normalized so the
// count-weighted mean weight is 1. Classes with zero examples get weight 0
// and are listed in `excluded`.
struct ClassWeights {
  std::vector<double> weights;
  std::vector<int> excluded;
};
ClassWeights class_weights(std::span<const long long> counts, double exponent = -0.9);

}  // namespace fundascreen::nn
