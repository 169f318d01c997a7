#include "ttfs/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ttfs {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_rank2(const Tensor& t, const char* name) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(name) + " must be rank 2, got " + shape_string(t.shape()));
  }
}

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                  static_cast<Eigen::Index>(t.dim(1)));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

void Shape2D::validate() const {
  if (height == 0 || width == 0 || channels == 0) {
    throw ShapeError("Shape2D dimensions must be positive, got " + to_string());
  }
}

std::string Shape2D::to_string() const {
  std::ostringstream os;
  os << channels << 'x' << height << 'x' << width;
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("matrix needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged matrix rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}
std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  MutMap(out.data().data(), a.dim(0), b.dim(1)).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + "^T");
  }
  Tensor out({a.dim(0), b.dim(0)});
  MutMap(out.data().data(), a.dim(0), b.dim(0)).noalias() =
      as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_string(a.shape()) + "^T x " +
                     shape_string(b.shape()));
  }
  Tensor out({a.dim(1), b.dim(1)});
  MutMap(out.data().data(), a.dim(1), b.dim(1)).noalias() =
      as_matrix(a).transpose() * as_matrix(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose operand");
  Tensor out({a.dim(1), a.dim(0)});
  MutMap(out.data().data(), a.dim(1), a.dim(0)) = as_matrix(a).transpose();
  return out;
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be at least 1");
  if (kernel == 0) throw ShapeError("kernel size must be at least 1");
  const std::size_t padded = extent + 2 * padding;
  if (kernel > padded) {
    throw ShapeError("kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ShapeError("non-integral output size: (" + std::to_string(padded) + " - " +
                     std::to_string(kernel) + ") / " + std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

namespace kernels {

void conv2d(std::span<const double> input, const Shape2D& in, std::span<const double> weights,
            std::size_t out_channels, std::size_t kernel, std::size_t stride,
            std::size_t padding, std::span<double> out) {
  const std::size_t oh = conv_output_extent(in.height, kernel, stride, padding);
  const std::size_t ow = conv_output_extent(in.width, kernel, stride, padding);
  const auto H = static_cast<std::ptrdiff_t>(in.height);
  const auto W = static_cast<std::ptrdiff_t>(in.width);
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t co = 0; co < out_channels; ++co) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < in.channels; ++ci) {
          const double* w = weights.data() + ((co * in.channels + ci) * kernel) * kernel;
          const double* src = input.data() + ci * in.height * in.width;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(x * stride + kx) - pad;
              if (ix < 0 || ix >= W) continue;
              acc += w[ky * kernel + kx] * src[iy * W + ix];
            }
          }
        }
        out[(co * oh + y) * ow + x] = acc;
      }
    }
  }
}

void avgpool2d(std::span<const double> input, const Shape2D& in, std::size_t window,
               std::span<double> out) {
  const std::size_t oh = in.height / window;
  const std::size_t ow = in.width / window;
  const double scale = 1.0 / static_cast<double>(window * window);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* src = input.data() + c * in.height * in.width;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            acc += src[(y * window + ky) * in.width + x * window + kx];
          }
        }
        out[(c * oh + y) * ow + x] = acc * scale;
      }
    }
  }
}

}  // namespace kernels

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d input must be C_in x H x W, got " + shape_string(input.shape()));
  }
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw ShapeError("conv2d kernels must be C_out x C_in x k x k, got " +
                     shape_string(kernels.shape()));
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(input.shape()) +
                     ", kernels " + shape_string(kernels.shape()));
  }
  const Shape2D in{input.dim(1), input.dim(2), input.dim(0)};
  const std::size_t k = kernels.dim(2);
  const std::size_t oh = conv_output_extent(in.height, k, stride, padding);
  const std::size_t ow = conv_output_extent(in.width, k, stride, padding);
  Tensor out({kernels.dim(0), oh, ow});
  kernels::conv2d(input.data(), in, kernels.data(), kernels.dim(0), k, stride, padding,
                  out.data());
  return out;
}

Tensor avgpool2d(const Tensor& input, std::size_t window) {
  if (input.rank() != 3) {
    throw ShapeError("avgpool2d input must be C x H x W, got " + shape_string(input.shape()));
  }
  if (window == 0 || input.dim(1) % window != 0 || input.dim(2) % window != 0) {
    throw ShapeError("pool window " + std::to_string(window) + " does not divide spatial size " +
                     shape_string(input.shape()));
  }
  const Shape2D in{input.dim(1), input.dim(2), input.dim(0)};
  Tensor out({in.channels, in.height / window, in.width / window});
  kernels::avgpool2d(input.data(), in, window, out.data());
  return out;
}

}  // namespace ttfs
