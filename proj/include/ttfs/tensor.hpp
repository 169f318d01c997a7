#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ttfs/errors.hpp"

namespace ttfs {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Spatial geometry of a feature map, stored channel-major (C x H x W).
/// A flat vector of N values is {1, 1, N}.
struct Shape2D {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  void validate() const;
  std::string to_string() const;
  bool operator==(const Shape2D&) const = default;
};

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  /// Row `r` of a rank-2 tensor.
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T, for a [m x k] and b [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a^T * b, for a [k x m] and b [k x n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Output spatial size of a strided, zero-padded window; throws ShapeError
/// when the window does not tile the padded extent.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

/// Cross-correlation of a [C_in x H x W] input with [C_out x C_in x k x k]
/// kernels. No kernel flip.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding);

/// Non-overlapping mean pooling over window x window cells, per channel.
Tensor avgpool2d(const Tensor& input, std::size_t window);

namespace kernels {

// Flat-buffer variants used by the batched trainer. `out` must be sized by
// the caller; it is overwritten.
void conv2d(std::span<const double> input, const Shape2D& in, std::span<const double> weights,
            std::size_t out_channels, std::size_t kernel, std::size_t stride,
            std::size_t padding, std::span<double> out);
void avgpool2d(std::span<const double> input, const Shape2D& in, std::size_t window,
               std::span<double> out);

}  // namespace kernels

}  // namespace ttfs
