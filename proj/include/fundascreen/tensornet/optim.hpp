#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fundascreen/tensornet/tensor.hpp"

namespace fundascreen::nn {

struct TrainSchedule {
  double base_lr = 0.0008;
  double warmup_start_lr = 0.0001;
  double warmup_epochs = 3.0;
  int batch_size = 32;
  int max_epochs = 20;
  int patience = 5;
  double momentum = 0.9;
  double weight_decay = 0.00004;
  bool nesterov = false;
  double ema_decay = 0.9999;
  // Caps the EMA decay at (1 + step) / (10 + step) so short runs are not
  // dominated by the initial parameters.
  bool ema_warmup = true;
  bool augment = true;

  void validate() const;
  bool operator==(const TrainSchedule&) const = default;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

// Linear warmup from warmup_start_lr at step 0 to base_lr at
// warmup_epochs * steps_per_epoch, constant afterwards.
double lr_at(std::int64_t step, const TrainSchedule& schedule, std::int64_t steps_per_epoch);

// Heavy-ball momentum with coupled L2 weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// With nesterov, the step uses grad + wd * param + momentum * v instead.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay, bool nesterov = false)
      : momentum_(momentum), weight_decay_(weight_decay), nesterov_(nesterov) {}

  // Throws Error(diverged) if any gradient is non-finite.
  void step(std::span<Parameter* const> params, double lr);

  std::int64_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& velocities() const { return velocity_; }

 private:
  double momentum_, weight_decay_;
  bool nesterov_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<double>> velocity_;
};

// shadow <- decay * shadow + (1 - decay) * params
void ema_update(std::span<double> shadow, std::span<const double> params, double decay);

double ema_decay_at(std::int64_t step, const TrainSchedule& schedule);

// Exponential moving average of a parameter set.
class Ema {
 public:
  explicit Ema(std::span<Parameter* const> params);

  void update(std::span<Parameter* const> params, double decay);
  const std::vector<std::vector<double>>& shadow() const { return shadow_; }

  // Exchanges parameter values and shadows. Calling twice restores the
  // original state; evaluation runs between the two calls.
  void swap(std::span<Parameter* const> params);

 private:
  std::vector<std::vector<double>> shadow_;
};

enum class Direction { lower_is_better, higher_is_better };

// True iff the last improvement over the best value is at least
// max(patience, 1) evaluations old.
bool should_stop(std::span<const double> history, int patience, Direction direction = Direction::lower_is_better);

// Index of the best entry (earliest on ties).
std::size_t best_index(std::span<const double> history, Direction direction = Direction::lower_is_better);

}  // namespace fundascreen::nn
