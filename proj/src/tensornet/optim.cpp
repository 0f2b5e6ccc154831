#include "fundascreen/tensornet/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fundascreen/error.hpp"

namespace fundascreen::nn {

void TrainSchedule::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::config, std::string("train schedule: ") + what);
  };
  require(warmup_start_lr > 0 && warmup_start_lr <= base_lr, "need 0 < warmup_start_lr <= base_lr");
  require(warmup_epochs >= 0, "warmup_epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(patience >= 0, "patience must be >= 0");
  require(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(ema_decay > 0 && ema_decay < 1, "ema_decay must be in (0, 1)");
}

#define FUNDASCREEN_SCHEDULE_FIELDS(X)                                                                       \
  X(base_lr) X(warmup_start_lr) X(warmup_epochs) X(batch_size) X(max_epochs) X(patience) X(momentum)     \
      X(weight_decay) X(nesterov) X(ema_decay) X(ema_warmup) X(augment)

void to_json(nlohmann::json& j, const TrainSchedule& s) {
  j = nlohmann::json::object();
#define X(name) j[#name] = s.name;
  FUNDASCREEN_SCHEDULE_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, TrainSchedule& s) {
  if (!j.is_object()) fail(ErrorCode::config, "train schedule must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)                                                                  \
  if (key == #name) {                                                            \
    known = true;                                                                \
    try {                                                                        \
      value.get_to(s.name);                                                      \
    } catch (const nlohmann::json::exception&) {                                 \
      fail(ErrorCode::config, "train schedule: bad value for '" + key + "'");    \
    }                                                                            \
  }
    FUNDASCREEN_SCHEDULE_FIELDS(X)
#undef X
    if (!known) fail(ErrorCode::config, "train schedule: unknown key '" + key + "'");
  }
}

double lr_at(std::int64_t step, const TrainSchedule& s, std::int64_t steps_per_epoch) {
  if (step < 0) fail(ErrorCode::invalid_argument, "lr_at: step must be >= 0");
  const double warmup_steps = s.warmup_epochs * static_cast<double>(steps_per_epoch);
  if (warmup_steps <= 0.0 || static_cast<double>(step) >= warmup_steps) return s.base_lr;
  const double t = static_cast<double>(step) / warmup_steps;
  return s.warmup_start_lr + t * (s.base_lr - s.warmup_start_lr);
}

void SgdMomentum::step(std::span<Parameter* const> params, double lr) {
  if (velocity_.empty()) {
    for (const auto* p : params) velocity_.emplace_back(p->value.size(), 0.0);
  }
  if (velocity_.size() != params.size()) fail(ErrorCode::shape_mismatch, "optimizer: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double g : params[i]->grad) {
      if (!std::isfinite(g)) {
        fail(ErrorCode::diverged, "non-finite gradient in '" + params[i]->name + "' at step " + std::to_string(steps_));
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& v = velocity_[i];
    if (v.size() != p.value.size()) fail(ErrorCode::shape_mismatch, "optimizer: velocity shape mismatch for " + p.name);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double g = p.grad[k] + weight_decay_ * p.value[k];
      v[k] = momentum_ * v[k] + g;
      p.value[k] -= lr * (nesterov_ ? g + momentum_ * v[k] : v[k]);
    }
  }
  ++steps_;
}

void ema_update(std::span<double> shadow, std::span<const double> params, double decay) {
  if (shadow.size() != params.size()) fail(ErrorCode::shape_mismatch, "ema: shadow and parameter sizes differ");
  for (std::size_t k = 0; k < shadow.size(); ++k) shadow[k] = decay * shadow[k] + (1.0 - decay) * params[k];
}

double ema_decay_at(std::int64_t step, const TrainSchedule& s) {
  if (!s.ema_warmup) return s.ema_decay;
  const double warm = (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step));
  return std::min(s.ema_decay, warm);
}

Ema::Ema(std::span<Parameter* const> params) {
  for (const auto* p : params) shadow_.push_back(p->value);
}

void Ema::update(std::span<Parameter* const> params, double decay) {
  if (params.size() != shadow_.size()) fail(ErrorCode::shape_mismatch, "ema: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) ema_update(shadow_[i], params[i]->value, decay);
}

void Ema::swap(std::span<Parameter* const> params) {
  if (params.size() != shadow_.size()) fail(ErrorCode::shape_mismatch, "ema: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) std::swap(params[i]->value, shadow_[i]);
}

std::size_t best_index(std::span<const double> history, Direction direction) {
  if (history.empty()) fail(ErrorCode::invalid_argument, "empty metric history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const bool better = direction == Direction::lower_is_better ? history[i] < history[best] : history[i] > history[best];
    if (better) best = i;
  }
  return best;
}

bool should_stop(std::span<const double> history, int patience, Direction direction) {
  const std::size_t best = best_index(history, direction);
  const std::size_t stale = history.size() - 1 - best;
  return stale >= static_cast<std::size_t>(std::max(patience, 1));
}

}  // namespace fundascreen::nn
