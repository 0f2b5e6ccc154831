#include <algorithm>
#include <cmath>
#include <numeric>

#include "fundascreen/error.hpp"
#include "fundascreen/models.hpp"
#include "fundascreen/rng.hpp"
#include "fundascreen/tensornet/loss.hpp"

namespace fundascreen::models {

nn::Architecture member_architecture(Family family, const PreparedData& data) {
  if (!is_network(family)) fail(ErrorCode::config, "metadata_only has no network architecture");
  if (data.train.eyes.empty()) fail(ErrorCode::missing_input, "train split has no eye images");
  const int side = data.train.image(data.train.eyes.front()).side;
  const int side_dim = family == Family::combined ? static_cast<int>(data.metadata_std.dimension()) : 0;
  if (family == Family::combined && side_dim == 0) {
    fail(ErrorCode::config, "combined family needs at least one standardized metadata feature");
  }
  return nn::default_architecture(side, side_dim, data.task.outputs());
}

nn::Tensor eye_input(const FundusImage& image, const ImageTransform& transform) {
  RgbImage rgb = to_rgb(image);
  if (transform) transform(rgb);
  return nn::to_input(rgb);
}

namespace {

std::vector<double> eye_class_weights(const PreparedData& data) {
  std::vector<long long> counts(static_cast<std::size_t>(data.task.classes), 0);
  for (const auto& e : data.train.eyes) ++counts[static_cast<std::size_t>(data.train.labels[e.patient])];
  return nn::class_weights(counts).weights;
}

nn::LossResult batch_loss(const TaskSpec& task, const SplitData& split, std::span<const std::size_t> eyes,
                          std::span<const std::vector<double>> outputs, std::span<const double> weights) {
  if (task.kind == TaskKind::classification) {
    std::vector<int> classes;
    classes.reserve(eyes.size());
    for (std::size_t e : eyes) classes.push_back(split.labels[split.eyes[e].patient]);
    return nn::loss_weighted_ce(outputs, classes, weights);
  }
  std::vector<std::vector<double>> targets;
  targets.reserve(eyes.size());
  for (std::size_t e : eyes) targets.push_back(split.targets_z[split.eyes[e].patient]);
  return nn::loss_mse(outputs, targets);
}

double tuning_loss(const nn::Network& net, const PreparedData& data, const MemberOptions& options,
                   std::span<const double> weights) {
  const SplitData& tune = data.tune;
  std::vector<std::vector<double>> outputs;
  std::vector<std::size_t> idx(tune.eyes.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  outputs.reserve(idx.size());
  for (const auto& e : tune.eyes) {
    if (options.trace) options.trace(TracePhase::early_stop, tune.patients[e.patient].patient_id);
    const nn::Tensor input = eye_input(tune.image(e), options.transform);
    if (net.has_side_input()) {
      outputs.push_back(net.predict(input, tune.metadata[e.patient]));
    } else {
      outputs.push_back(net.predict(input));
    }
  }
  return batch_loss(data.task, tune, idx, outputs, weights).value;
}

}  // namespace

MemberResult train_member(Family family, const PreparedData& data, const MemberOptions& options) {
  if (!is_network(family)) fail(ErrorCode::config, "train_member needs fundus_only or combined");
  const nn::TrainSchedule& schedule = options.schedule;
  schedule.validate();
  if (data.tune.eyes.empty()) fail(ErrorCode::missing_input, "tune split has no eye images");

  MemberResult result;
  result.architecture = member_architecture(family, data);
  nn::Network net(result.architecture, derive_seed(options.seed, "init"));
  const std::vector<nn::Parameter*> params = net.parameters();
  nn::SgdMomentum optimizer(schedule.momentum, schedule.weight_decay, schedule.nesterov);
  nn::Ema ema(params);
  Rng order_rng(derive_seed(options.seed, "order"));
  Rng augment_rng(derive_seed(options.seed, "augment"));

  const SplitData& train = data.train;
  const bool combined = family == Family::combined;
  const std::vector<double> weights =
      data.task.kind == TaskKind::classification ? eye_class_weights(data) : std::vector<double>{};
  const std::size_t n = train.eyes.size();
  const auto batch = static_cast<std::size_t>(schedule.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);

  std::vector<std::size_t> order(n);
  std::vector<nn::Tensor> inputs;
  std::vector<std::vector<double>> side;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> ids(order.data() + start, std::min(batch, n - start));
      inputs.clear();
      side.clear();
      for (std::size_t e : ids) {
        const EyeExample& ex = train.eyes[e];
        if (options.trace) options.trace(TracePhase::gradient_step, train.patients[ex.patient].patient_id);
        RgbImage rgb = to_rgb(train.image(ex));
        if (schedule.augment) rgb = nn::augment(rgb, options.augment, augment_rng);
        if (options.transform) options.transform(rgb);
        inputs.push_back(nn::to_input(rgb));
        if (combined) side.push_back(train.metadata[ex.patient]);
      }
      const auto outputs = net.forward(inputs, side);
      const nn::LossResult loss = batch_loss(data.task, train, ids, outputs, weights);
      if (!std::isfinite(loss.value)) {
        fail(ErrorCode::diverged, "non-finite training loss at step " + std::to_string(step));
      }
      net.backward(loss.grad);
      try {
        optimizer.step(params, nn::lr_at(step, schedule, steps_per_epoch));
      } catch (const Error& e) {
        fail(e.code(), std::string(e.what()) + " at step " + std::to_string(step));
      }
      ema.update(params, nn::ema_decay_at(step, schedule));
      ++step;
    }

    ema.swap(params);
    const double tune = tuning_loss(net, data, options, weights);
    ema.swap(params);
    if (!std::isfinite(tune)) fail(ErrorCode::diverged, "non-finite tuning loss after step " + std::to_string(step));
    result.tune_history.push_back(tune);
    if (nn::best_index(result.tune_history) == result.tune_history.size() - 1) {
      result.checkpoint = nn::make_checkpoint(net, ema.shadow());
      result.best_epoch = result.tune_history.size() - 1;
    }
    if (nn::should_stop(result.tune_history, schedule.patience)) break;
  }
  result.steps = step;
  return result;
}

std::vector<std::vector<double>> eye_outputs(const nn::Network& net, const TaskSpec& task, const SplitData& split,
                                             const ImageTransform& transform) {
  std::vector<std::vector<double>> out;
  out.reserve(split.eyes.size());
  for (const auto& e : split.eyes) {
    const nn::Tensor input = eye_input(split.image(e), transform);
    std::vector<double> raw =
        net.has_side_input() ? net.predict(input, split.metadata[e.patient]) : net.predict(input);
    if (task.kind == TaskKind::classification) {
      out.push_back({nn::softmax(raw)[1]});
    } else {
      out.push_back(std::move(raw));
    }
  }
  return out;
}

}  // namespace fundascreen::models
