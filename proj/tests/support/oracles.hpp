#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fundascreen/rng.hpp"
#include "fundascreen/tensornet/layers.hpp"
#include "fundascreen/tensornet/loss.hpp"
#include "fundascreen/tensornet/network.hpp"

namespace oracle {

// Mann-Whitney U / (P N) by explicit pair counting, ties count one half.
inline double pair_count_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Relative error with an absolute floor: gradients below 1e-4 in magnitude
// are compared absolutely at the 1e-10 level, where central differences are
// dominated by rounding.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares a layer's analytic gradients (parameters and input) against
// central differences of f = sum(r * layer(x)) with a fixed random r.
inline GradCheck check_layer(fundascreen::nn::Layer& layer, const fundascreen::nn::Tensor& x,
                             std::span<const double> side, fundascreen::Rng& rng, double h = 1e-4) {
  using fundascreen::nn::Tensor;
  Tensor out(layer.output_shape());
  layer.forward(x, side, out);
  std::vector<double> r(out.data.size());
  for (double& v : r) v = rng.normal();
  const auto f = [&](const Tensor& in) {
    Tensor o(layer.output_shape());
    layer.forward(in, side, o);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * o.data[i];
    return s;
  };

  Tensor grad_out(layer.output_shape());
  grad_out.data = r;
  Tensor grad_in(layer.input_shape());
  for (auto* p : layer.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  layer.backward(x, out, grad_out, grad_in);

  GradCheck gc;
  for (auto* p : layer.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = f(x);
      p->value[i] = saved - h;
      const double down = f(x);
      p->value[i] = saved;
      gc.max_rel_error = std::max(gc.max_rel_error, relative_error(p->grad[i], (up - down) / (2 * h)));
      ++gc.checked;
    }
  }
  Tensor xp = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    xp.data[i] = x.data[i] + h;
    const double up = f(xp);
    xp.data[i] = x.data[i] - h;
    const double down = f(xp);
    xp.data[i] = x.data[i];
    gc.max_rel_error = std::max(gc.max_rel_error, relative_error(grad_in.data[i], (up - down) / (2 * h)));
    ++gc.checked;
  }
  return gc;
}

// Random input whose entries stay at least `margin` away from zero and from
// each other within every 2x2 block, so ReLU and max-pool kinks are never
// crossed by a finite-difference step.
inline fundascreen::nn::Tensor kink_free_input(fundascreen::nn::Shape shape, fundascreen::Rng& rng,
                                               double margin = 1e-2) {
  fundascreen::nn::Tensor t(shape);
  const std::size_t n = t.data.size();
  std::vector<double> levels(n);
  for (std::size_t i = 0; i < n; ++i) levels[i] = (static_cast<double>(i) + 1.0) * margin * 3.0;
  for (std::size_t i = n; i > 1; --i) std::swap(levels[i - 1], levels[rng.below(i)]);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = rng.bernoulli(0.5) ? levels[i] : -levels[i];
  return t;
}

// Whole-network check: loss(net(x)) against central differences over every
// parameter.
inline GradCheck check_network(fundascreen::nn::Network& net, std::span<const fundascreen::nn::Tensor> inputs,
                               std::span<const std::vector<double>> side,
                               const std::function<fundascreen::nn::LossResult(
                                   const std::vector<std::vector<double>>&)>& loss,
                               double h = 1e-4) {
  const auto outputs = net.forward(inputs, side);
  net.backward(loss(outputs).grad);
  GradCheck gc;
  for (auto* p : net.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = loss(net.forward(inputs, side)).value;
      p->value[i] = saved - h;
      const double down = loss(net.forward(inputs, side)).value;
      p->value[i] = saved;
      gc.max_rel_error = std::max(gc.max_rel_error, relative_error(p->grad[i], (up - down) / (2 * h)));
      ++gc.checked;
    }
  }
  return gc;
}

}  // namespace oracle
