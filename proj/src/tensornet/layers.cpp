#include "fundascreen/tensornet/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "fundascreen/error.hpp"

namespace fundascreen::nn {

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

Parameter::Parameter(std::string n, std::vector<std::size_t> d) : name(std::move(n)), dims(std::move(d)) {
  std::size_t count = 1;
  for (auto x : dims) count *= x;
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

namespace {

void he_normal(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : p.value) v = rng.normal(0.0, sd);
}

}  // namespace

// --- Conv2d ----------------------------------------------------------------

Conv2d::Conv2d(Shape in, int filters, int kernel, int stride, const std::string& name)
    : in_(in), kernel_(kernel), stride_(stride), pad_(kernel / 2) {
  if (filters <= 0 || kernel <= 0 || stride <= 0) fail(ErrorCode::shape_mismatch, name + ": non-positive conv setting");
  if (in.channels <= 0 || in.height <= 0 || in.width <= 0) fail(ErrorCode::shape_mismatch, name + ": empty input");
  const int oh = (in.height + 2 * pad_ - kernel) / stride + 1;
  const int ow = (in.width + 2 * pad_ - kernel) / stride + 1;
  if (oh <= 0 || ow <= 0) {
    fail(ErrorCode::shape_mismatch, name + ": kernel " + std::to_string(kernel) + " does not fit input " + to_string(in));
  }
  out_ = Shape{filters, oh, ow};
  weight_ = Parameter(name + "/weight", {static_cast<std::size_t>(filters), static_cast<std::size_t>(in.channels),
                                         static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)});
  bias_ = Parameter(name + "/bias", {static_cast<std::size_t>(filters)});
}

void Conv2d::initialize(Rng& rng) {
  he_normal(weight_, static_cast<std::size_t>(in_.channels) * kernel_ * kernel_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Unrolls the receptive fields into a (C*K*K) x (OH*OW) row-major matrix,
// zero where the window overhangs the padded border.
void im2col(const double* in, Shape s, Shape o, int k, int stride, int pad, std::vector<double>& col) {
  const std::size_t positions = static_cast<std::size_t>(o.height) * o.width;
  col.assign(static_cast<std::size_t>(s.channels) * k * k * positions, 0.0);
  for (int c = 0; c < s.channels; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * s.height * s.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * positions;
        for (int y = 0; y < o.height; ++y) {
          const int iy = y * stride + ky - pad;
          if (iy < 0 || iy >= s.height) continue;
          double* dst = row + static_cast<std::size_t>(y) * o.width;
          const double* src = plane + static_cast<std::size_t>(iy) * s.width;
          for (int x = 0; x < o.width; ++x) {
            const int ix = x * stride + kx - pad;
            if (ix >= 0 && ix < s.width) dst[x] = src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input planes.
void col2im(const std::vector<double>& col, Shape s, Shape o, int k, int stride, int pad, double* out) {
  const std::size_t positions = static_cast<std::size_t>(o.height) * o.width;
  for (int c = 0; c < s.channels; ++c) {
    double* plane = out + static_cast<std::size_t>(c) * s.height * s.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * positions;
        for (int y = 0; y < o.height; ++y) {
          const int iy = y * stride + ky - pad;
          if (iy < 0 || iy >= s.height) continue;
          const double* src = row + static_cast<std::size_t>(y) * o.width;
          double* dst = plane + static_cast<std::size_t>(iy) * s.width;
          for (int x = 0; x < o.width; ++x) {
            const int ix = x * stride + kx - pad;
            if (ix >= 0 && ix < s.width) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

void Conv2d::forward(const Tensor& in, std::span<const double>, Tensor& out) const {
  thread_local std::vector<double> col;
  im2col(in.data.data(), in_, out_, kernel_, stride_, pad_, col);
  const auto rows = static_cast<Eigen::Index>(in_.channels) * kernel_ * kernel_;
  const auto positions = static_cast<Eigen::Index>(out_.height) * out_.width;
  out.shape = out_;
  out.data.resize(out_.size());
  MatrixMap o(out.data.data(), out_.channels, positions);
  ConstMatrixMap w(weight_.value.data(), out_.channels, rows);
  ConstMatrixMap c(col.data(), rows, positions);
  o.noalias() = w * c;
  for (int oc = 0; oc < out_.channels; ++oc) o.row(oc).array() += bias_.value[oc];
}

void Conv2d::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  thread_local std::vector<double> col;
  im2col(in.data.data(), in_, out_, kernel_, stride_, pad_, col);
  const auto rows = static_cast<Eigen::Index>(in_.channels) * kernel_ * kernel_;
  const auto positions = static_cast<Eigen::Index>(out_.height) * out_.width;
  ConstMatrixMap g(grad_out.data.data(), out_.channels, positions);
  ConstMatrixMap c(col.data(), rows, positions);
  MatrixMap gw(weight_.grad.data(), out_.channels, rows);
  gw.noalias() += g * c.transpose();
  // Sequential sum: Eigen's vectorized reduction order depends on buffer
  // alignment, which would make training runs differ in the last bits.
  for (int oc = 0; oc < out_.channels; ++oc) {
    const double* row = grad_out.data.data() + static_cast<std::size_t>(oc) * positions;
    double s = 0.0;
    for (Eigen::Index i = 0; i < positions; ++i) s += row[i];
    bias_.grad[oc] += s;
  }

  ConstMatrixMap w(weight_.value.data(), out_.channels, rows);
  MatrixMap gc(col.data(), rows, positions);
  gc.noalias() = w.transpose() * g;
  grad_in.shape = in_;
  grad_in.data.assign(in_.size(), 0.0);
  col2im(col, in_, out_, kernel_, stride_, pad_, grad_in.data.data());
}

// --- Relu ------------------------------------------------------------------

void Relu::forward(const Tensor& in, std::span<const double>, Tensor& out) const {
  out.shape = shape_;
  out.data.resize(in.data.size());
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
}

void Relu::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  grad_in.shape = shape_;
  grad_in.data.resize(in.data.size());
  const double* x = in.data.data();
  const double* g = grad_out.data.data();
  double* gi = grad_in.data.data();
  for (std::size_t i = 0; i < in.data.size(); ++i) gi[i] = g[i] * static_cast<double>(x[i] > 0.0);
}

// --- MaxPool2 --------------------------------------------------------------

MaxPool2::MaxPool2(Shape in) : in_(in), out_{in.channels, in.height / 2, in.width / 2} {
  if (out_.height <= 0 || out_.width <= 0) fail(ErrorCode::shape_mismatch, "maxpool2: input " + to_string(in) + " too small");
}

void MaxPool2::forward(const Tensor& in, std::span<const double>, Tensor& out) const {
  out.shape = out_;
  out.data.resize(out_.size());
  const int W = in_.width, OH = out_.height, OW = out_.width;
  for (int c = 0; c < in_.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < OH; ++y) {
      const double* r0 = src + static_cast<std::size_t>(2 * y) * W;
      const double* r1 = r0 + W;
      for (int x = 0; x < OW; ++x) {
        dst[static_cast<std::size_t>(y) * OW + x] =
            std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
      }
    }
  }
}

void MaxPool2::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  grad_in.shape = in_;
  grad_in.data.assign(in_.size(), 0.0);
  const int W = in_.width, OH = out_.height, OW = out_.width;
  for (int c = 0; c < in_.channels; ++c) {
    const double* src = in.channel(c);
    const double* g = grad_out.channel(c);
    double* gin = grad_in.channel(c);
    for (int y = 0; y < OH; ++y) {
      for (int x = 0; x < OW; ++x) {
        const std::size_t cand[4] = {static_cast<std::size_t>(2 * y) * W + 2 * x, static_cast<std::size_t>(2 * y) * W + 2 * x + 1,
                                     static_cast<std::size_t>(2 * y + 1) * W + 2 * x,
                                     static_cast<std::size_t>(2 * y + 1) * W + 2 * x + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (src[cand[k]] > src[best]) best = cand[k];
        }
        gin[best] += g[static_cast<std::size_t>(y) * OW + x];
      }
    }
  }
}

// --- GlobalAvgPool ---------------------------------------------------------

void GlobalAvgPool::forward(const Tensor& in, std::span<const double>, Tensor& out) const {
  out.shape = output_shape();
  out.data.assign(in_.channels, 0.0);
  const std::size_t area = static_cast<std::size_t>(in_.height) * in_.width;
  for (int c = 0; c < in_.channels; ++c) {
    const double* src = in.channel(c);
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += src[i];
    out.data[c] = s / static_cast<double>(area);
  }
}

void GlobalAvgPool::backward(const Tensor&, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  grad_in.shape = in_;
  grad_in.data.resize(in_.size());
  const std::size_t area = static_cast<std::size_t>(in_.height) * in_.width;
  for (int c = 0; c < in_.channels; ++c) {
    const double g = grad_out.data[c] / static_cast<double>(area);
    std::fill(grad_in.channel(c), grad_in.channel(c) + area, g);
  }
}

// --- ConcatSide ------------------------------------------------------------

ConcatSide::ConcatSide(Shape in, int side_dim) : in_(in), side_dim_(side_dim) {
  if (!in.is_vector()) fail(ErrorCode::shape_mismatch, "concat_side: input must be a vector, got " + to_string(in));
  if (side_dim <= 0) fail(ErrorCode::shape_mismatch, "concat_side: side input dimension must be positive");
}

void ConcatSide::forward(const Tensor& in, std::span<const double> side, Tensor& out) const {
  if (side.size() != static_cast<std::size_t>(side_dim_)) {
    fail(ErrorCode::shape_mismatch, "concat_side: side input has " + std::to_string(side.size()) + " values, expected " +
                                        std::to_string(side_dim_));
  }
  out.shape = output_shape();
  out.data.assign(in.data.begin(), in.data.end());
  out.data.insert(out.data.end(), side.begin(), side.end());
}

void ConcatSide::backward(const Tensor&, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  grad_in.shape = in_;
  grad_in.data.assign(grad_out.data.begin(), grad_out.data.begin() + in_.channels);
}

// --- Dense -----------------------------------------------------------------

Dense::Dense(Shape in, int units, const std::string& name) : in_(in), units_(units) {
  if (!in.is_vector()) fail(ErrorCode::shape_mismatch, name + ": dense input must be a vector, got " + to_string(in));
  if (units <= 0) fail(ErrorCode::shape_mismatch, name + ": dense layer needs at least one unit");
  weight_ = Parameter(name + "/weight", {static_cast<std::size_t>(units), static_cast<std::size_t>(in.channels)});
  bias_ = Parameter(name + "/bias", {static_cast<std::size_t>(units)});
}

void Dense::initialize(Rng& rng) {
  he_normal(weight_, static_cast<std::size_t>(in_.channels), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

void Dense::forward(const Tensor& in, std::span<const double>, Tensor& out) const {
  out.shape = output_shape();
  out.data.resize(units_);
  const int n = in_.channels;
  for (int u = 0; u < units_; ++u) {
    const double* w = weight_.value.data() + static_cast<std::size_t>(u) * n;
    double s = bias_.value[u];
    for (int i = 0; i < n; ++i) s += w[i] * in.data[i];
    out.data[u] = s;
  }
}

void Dense::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  const int n = in_.channels;
  grad_in.shape = in_;
  grad_in.data.assign(n, 0.0);
  for (int u = 0; u < units_; ++u) {
    const double g = grad_out.data[u];
    const double* w = weight_.value.data() + static_cast<std::size_t>(u) * n;
    double* gw = weight_.grad.data() + static_cast<std::size_t>(u) * n;
    for (int i = 0; i < n; ++i) {
      gw[i] += g * in.data[i];
      grad_in.data[i] += w[i] * g;
    }
    bias_.grad[u] += g;
  }
}

}  // namespace fundascreen::nn
