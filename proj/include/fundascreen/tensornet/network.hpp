#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "fundascreen/image.hpp"
#include "fundascreen/tensornet/layers.hpp"

namespace fundascreen::nn {

struct LayerSpec {
  enum class Kind { conv2d, relu, maxpool2, global_avg_pool, concat_side, dense };
  Kind kind = Kind::relu;
  int units = 0;  // conv filters or dense units
  int kernel = 3;
  int stride = 1;

  bool operator==(const LayerSpec&) const = default;
};

struct Architecture {
  Shape input;
  std::vector<LayerSpec> layers;
  int side_dim = 0;  // width of the side input fed to concat_side, 0 if absent

  bool operator==(const Architecture&) const = default;
};

// conv3x3(8)-relu-pool, conv3x3(16)-relu-pool, conv3x3(32)-relu, global
// average pool, optional concat of `side_dim` side inputs, dense(outputs).
Architecture default_architecture(int image_side, int side_dim, int outputs);

void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);

// Image in [0, 1] (HWC) to network input (CHW), shifted to [-0.5, 0.5].
Tensor to_input(const RgbImage& image);

class Network {
 public:
  // Builds all layers, checking shape compatibility, and initializes
  // parameters from `seed`.
  Network(const Architecture& arch, std::uint64_t seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const Architecture& architecture() const { return arch_; }
  Shape output_shape() const { return layers_.back()->output_shape(); }
  bool has_side_input() const { return arch_.side_dim > 0; }

  // Batched forward pass; activations are cached for backward().
  // `side` must hold one vector per example iff the network has a concat layer.
  std::vector<std::vector<double>> forward(std::span<const Tensor> inputs, std::span<const std::vector<double>> side = {});

  // Zeroes all gradients, then accumulates d(loss)/d(parameters) given
  // d(loss)/d(outputs) for the batch of the last forward() call.
  void backward(std::span<const std::vector<double>> grad_outputs);

  // Gradient of the loss with respect to each example's input from the most
  // recent backward() call.
  const std::vector<Tensor>& input_gradients() const { return input_grads_; }

  // Inference for a single example without touching the cache.
  std::vector<double> predict(const Tensor& input, std::span<const double> side = {}) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

 private:
  void check_example(const Tensor& input, std::span<const double> side) const;

  Architecture arch_;
  std::vector<std::unique_ptr<Layer>> layers_;
  // cache_[example][layer] = input to that layer; the final entry is the output.
  std::vector<std::vector<Tensor>> cache_;
  std::vector<std::vector<double>> side_cache_;
  std::vector<Tensor> input_grads_;
};

}  // namespace fundascreen::nn
