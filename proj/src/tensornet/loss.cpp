#include "fundascreen/tensornet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fundascreen/error.hpp"

namespace fundascreen::nn {

LossResult loss_mse(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> target) {
  if (pred.size() != target.size() || pred.empty()) fail(ErrorCode::shape_mismatch, "mse: batch sizes differ or are empty");
  LossResult r;
  r.grad.resize(pred.size());
  std::size_t count = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    if (pred[b].size() != target[b].size()) fail(ErrorCode::shape_mismatch, "mse: target width differs from prediction");
    count += pred[b].size();
  }
  for (std::size_t b = 0; b < pred.size(); ++b) {
    r.grad[b].resize(pred[b].size());
    for (std::size_t k = 0; k < pred[b].size(); ++k) {
      const double d = pred[b][k] - target[b][k];
      r.value += d * d;
      r.grad[b][k] = 2.0 * d / static_cast<double>(count);
    }
  }
  r.value /= static_cast<double>(count);
  return r;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - m));
  for (double& v : p) v /= z;
  return p;
}

LossResult loss_weighted_ce(std::span<const std::vector<double>> logits, std::span<const int> classes,
                            std::span<const double> class_weights) {
  if (logits.size() != classes.size() || logits.empty()) fail(ErrorCode::shape_mismatch, "cross entropy: batch sizes differ or are empty");
  LossResult r;
  r.grad.resize(logits.size());
  const double inv_batch = 1.0 / static_cast<double>(logits.size());
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const auto& l = logits[b];
    const int y = classes[b];
    if (y < 0 || static_cast<std::size_t>(y) >= l.size() || l.size() != class_weights.size()) {
      fail(ErrorCode::shape_mismatch, "cross entropy: class index or weight count does not match logits");
    }
    const double w = class_weights[y];
    if (!(w >= 0.0)) fail(ErrorCode::invalid_argument, "cross entropy: class weights must be non-negative");
    const double m = *std::max_element(l.begin(), l.end());
    double z = 0.0;
    for (double v : l) z += std::exp(v - m);
    const double log_z = m + std::log(z);
    r.value += w * (log_z - l[y]) * inv_batch;
    r.grad[b].resize(l.size());
    for (std::size_t k = 0; k < l.size(); ++k) {
      const double p = std::exp(l[k] - log_z);
      r.grad[b][k] = w * (p - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return r;
}

ClassWeights class_weights(std::span<const long long> counts, double exponent) {
  ClassWeights out;
  out.weights.assign(counts.size(), 0.0);
  double total = 0.0, weighted = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 0) fail(ErrorCode::invalid_argument, "class counts must be non-negative");
    if (counts[c] == 0) {
      out.excluded.push_back(static_cast<int>(c));
      continue;
    }
    out.weights[c] = std::pow(static_cast<double>(counts[c]), exponent);
    total += static_cast<double>(counts[c]);
    weighted += static_cast<double>(counts[c]) * out.weights[c];
  }
  if (total == 0.0) fail(ErrorCode::invalid_argument, "class weights need at least one non-empty class");
  for (double& w : out.weights) w *= total / weighted;
  return out;
}

}  // namespace fundascreen::nn
