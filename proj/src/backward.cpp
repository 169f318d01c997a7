#include "ttfs/backward.hpp"

#include <algorithm>

namespace ttfs {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": upstream gradient " + shape_string(b.shape()) +
                     " does not match " + shape_string(a.shape()));
  }
}

}  // namespace

Gradients matmul_backward(const Tensor& a, const Tensor& b, const Tensor& upstream) {
  if (upstream.rank() != 2 || a.rank() != 2 || b.rank() != 2 || upstream.dim(0) != a.dim(0) ||
      upstream.dim(1) != b.dim(1)) {
    throw ShapeError("matmul backward: upstream " + shape_string(upstream.shape()) +
                     " does not match product of " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  return {matmul_nt(upstream, b), matmul_tn(a, upstream)};
}

Gradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  if (upstream.rank() != 2 || upstream.dim(0) != input.dim(0) ||
      upstream.dim(1) != weights.dim(0)) {
    throw ShapeError("dense backward: upstream " + shape_string(upstream.shape()) +
                     " does not match output of " + shape_string(input.shape()) + " x " +
                     shape_string(weights.shape()) + "^T");
  }
  return {matmul(upstream, weights), matmul_tn(upstream, input)};
}

namespace kernels {

void conv2d_backward(std::span<const double> input, const Shape2D& in,
                     std::span<const double> weights, std::size_t out_channels,
                     std::size_t kernel, std::size_t stride, std::size_t padding,
                     std::span<const double> upstream, std::span<double> input_grad,
                     std::span<double> weight_grad) {
  const std::size_t oh = conv_output_extent(in.height, kernel, stride, padding);
  const std::size_t ow = conv_output_extent(in.width, kernel, stride, padding);
  const auto H = static_cast<std::ptrdiff_t>(in.height);
  const auto W = static_cast<std::ptrdiff_t>(in.width);
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  std::fill(input_grad.begin(), input_grad.end(), 0.0);
  for (std::size_t co = 0; co < out_channels; ++co) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double g = upstream[(co * oh + y) * ow + x];
        if (g == 0.0) continue;
        for (std::size_t ci = 0; ci < in.channels; ++ci) {
          const std::size_t wbase = ((co * in.channels + ci) * kernel) * kernel;
          const std::size_t ibase = ci * in.height * in.width;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(x * stride + kx) - pad;
              if (ix < 0 || ix >= W) continue;
              const std::size_t ii = ibase + static_cast<std::size_t>(iy * W + ix);
              weight_grad[wbase + ky * kernel + kx] += g * input[ii];
              input_grad[ii] += g * weights[wbase + ky * kernel + kx];
            }
          }
        }
      }
    }
  }
}

void avgpool2d_backward(const Shape2D& in, std::size_t window, std::span<const double> upstream,
                        std::span<double> input_grad) {
  const std::size_t oh = in.height / window;
  const std::size_t ow = in.width / window;
  const double scale = 1.0 / static_cast<double>(window * window);
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t y = 0; y < in.height; ++y) {
      for (std::size_t x = 0; x < in.width; ++x) {
        input_grad[(c * in.height + y) * in.width + x] =
            upstream[(c * oh + y / window) * ow + x / window] * scale;
      }
    }
  }
}

}  // namespace kernels

Gradients conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                          std::size_t padding, const Tensor& upstream) {
  const Tensor probe = conv2d(input, kernels, stride, padding);
  require_same_shape(probe, upstream, "conv2d backward");
  const Shape2D in{input.dim(1), input.dim(2), input.dim(0)};
  Gradients g{Tensor(input.shape()), Tensor(kernels.shape())};
  kernels::conv2d_backward(input.data(), in, kernels.data(), kernels.dim(0), kernels.dim(2),
                           stride, padding, upstream.data(), g.input.data(), g.params.data());
  return g;
}

Tensor avgpool2d_backward(const Shape& input_shape, std::size_t window, const Tensor& upstream) {
  if (input_shape.size() != 3 || window == 0 || input_shape[1] % window != 0 ||
      input_shape[2] % window != 0) {
    throw ShapeError("avgpool2d backward: window " + std::to_string(window) +
                     " does not tile " + shape_string(input_shape));
  }
  const Shape expected{input_shape[0], input_shape[1] / window, input_shape[2] / window};
  if (upstream.shape() != expected) {
    throw ShapeError("avgpool2d backward: upstream " + shape_string(upstream.shape()) +
                     " does not match " + shape_string(expected));
  }
  Tensor grad(input_shape);
  kernels::avgpool2d_backward({input_shape[1], input_shape[2], input_shape[0]}, window,
                              upstream.data(), grad.data());
  return grad;
}

Tensor relu1_backward(const Tensor& pre_activation, const Tensor& upstream) {
  require_same_shape(pre_activation, upstream, "relu1 backward");
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double x = pre_activation[i];
    if (!(x > 0.0 && x <= 1.0)) grad[i] = 0.0;
  }
  return grad;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& upstream) {
  require_same_shape(pre_activation, upstream, "relu backward");
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(pre_activation[i] > 0.0)) grad[i] = 0.0;
  }
  return grad;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& upstream) {
  require_same_shape(mask, upstream, "dropout backward");
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
  return grad;
}

}  // namespace ttfs
