#pragma once

#include <span>

#include "ttfs/tensor.hpp"

namespace ttfs {

/// Input and parameter gradients of one layer. `params` is empty for
/// parameter-free layers.
struct Gradients {
  Tensor input;
  Tensor params;
};

/// y = a * b.
Gradients matmul_backward(const Tensor& a, const Tensor& b, const Tensor& upstream);

/// Fully connected layer z = x * W^T with x [B x in], W [out x in].
Gradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

Gradients conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                          std::size_t padding, const Tensor& upstream);

Tensor avgpool2d_backward(const Shape& input_shape, std::size_t window, const Tensor& upstream);

/// Passes the gradient where 0 < x <= 1.
Tensor relu1_backward(const Tensor& pre_activation, const Tensor& upstream);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& upstream);

/// `mask` holds the per-element scale applied in the forward pass (0 or 1/(1-p)).
Tensor dropout_backward(const Tensor& mask, const Tensor& upstream);

namespace kernels {

/// Accumulates into `weight_grad` and overwrites `input_grad`.
void conv2d_backward(std::span<const double> input, const Shape2D& in,
                     std::span<const double> weights, std::size_t out_channels,
                     std::size_t kernel, std::size_t stride, std::size_t padding,
                     std::span<const double> upstream, std::span<double> input_grad,
                     std::span<double> weight_grad);
void avgpool2d_backward(const Shape2D& in, std::size_t window, std::span<const double> upstream,
                        std::span<double> input_grad);

}  // namespace kernels

}  // namespace ttfs
