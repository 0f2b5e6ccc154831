#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fundascreen/rng.hpp"
#include "fundascreen/tensornet/tensor.hpp"

namespace fundascreen::nn {

// One differentiable stage. Shapes are fixed at construction; forward and
// backward never broadcast.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape input_shape() const = 0;
  virtual Shape output_shape() const = 0;

  // `side` is only read by the concat layer.
  virtual void forward(const Tensor& in, std::span<const double> side, Tensor& out) const = 0;

  // Accumulates parameter gradients and writes dL/d(in) into grad_in.
  virtual void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual void initialize(Rng&) {}
};

// Square k x k convolution, zero "same" padding of k/2, stride s.
class Conv2d final : public Layer {
 public:
  Conv2d(Shape in, int filters, int kernel, int stride, const std::string& name);

  std::string kind() const override { return "conv2d"; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  void forward(const Tensor& in, std::span<const double> side, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Shape in_, out_;
  int kernel_, stride_, pad_;
  Parameter weight_;  // [filters][in_channels][k][k]
  Parameter bias_;    // [filters]
};

class Relu final : public Layer {
 public:
  explicit Relu(Shape in) : shape_(in) {}
  std::string kind() const override { return "relu"; }
  Shape input_shape() const override { return shape_; }
  Shape output_shape() const override { return shape_; }
  void forward(const Tensor& in, std::span<const double> side, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;

 private:
  Shape shape_;
};

// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
class MaxPool2 final : public Layer {
 public:
  explicit MaxPool2(Shape in);
  std::string kind() const override { return "maxpool2"; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  void forward(const Tensor& in, std::span<const double> side, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;

 private:
  Shape in_, out_;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(Shape in) : in_(in) {}
  std::string kind() const override { return "global_avg_pool"; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return Shape{in_.channels, 1, 1}; }
  void forward(const Tensor& in, std::span<const double> side, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;

 private:
  Shape in_;
};

// Appends the per-example side input (e.g. standardized metadata) to a
// feature vector.
class ConcatSide final : public Layer {
 public:
  ConcatSide(Shape in, int side_dim);
  std::string kind() const override { return "concat_side"; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return Shape{in_.channels + side_dim_, 1, 1}; }
  void forward(const Tensor& in, std::span<const double> side, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
  int side_dim() const { return side_dim_; }

 private:
  Shape in_;
  int side_dim_;
};

class Dense final : public Layer {
 public:
  Dense(Shape in, int units, const std::string& name);
  std::string kind() const override { return "dense"; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return Shape{units_, 1, 1}; }
  void forward(const Tensor& in, std::span<const double> side, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Shape in_;
  int units_;
  Parameter weight_;  // [units][inputs]
  Parameter bias_;    // [units]
};

}  // namespace fundascreen::nn
