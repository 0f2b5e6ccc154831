#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fundascreen::nn {

// Activation shape: channels x height x width, stored row-major (CHW).
// Vectors use height = width = 1.
struct Shape {
  int channels = 0;
  int height = 1;
  int width = 1;

  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool is_vector() const { return height == 1 && width == 1; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}

  double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * shape.height * shape.width; }
  const double* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * shape.height * shape.width; }
};

// A trainable array with its accumulated gradient.
struct Parameter {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> d);
};

}  // namespace fundascreen::nn
