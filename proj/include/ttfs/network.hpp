#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ttfs/backward.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs {

enum class LayerKind { kDense, kConv2d, kAvgPool, kDropout, kFlatten };
enum class Activation { kNone, kRelu1, kRelu };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// One layer of a feed-forward network. Every layer maps a flat feature
/// vector of `in.size()` values to one of `out.size()` values; spatial layers
/// interpret them channel-major.
struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  Shape2D in;
  Shape2D out;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 0;
  double dropout = 0.0;
  Activation activation = Activation::kNone;

  static LayerSpec dense(std::size_t fan_in, std::size_t fan_out, Activation act);
  static LayerSpec conv(Shape2D in, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride, std::size_t padding, Activation act);
  static LayerSpec avgpool(Shape2D in, std::size_t window);
  static LayerSpec dropout_layer(Shape2D shape, double p);
  static LayerSpec flatten(Shape2D in);

  bool has_activation() const { return activation != Activation::kNone; }
  /// Dense and conv layers carry trainable weights and the weight-sum constraint.
  bool has_params() const { return kind == LayerKind::kDense || kind == LayerKind::kConv2d; }
  /// Layers that become a population of spiking neurons after conversion.
  bool is_synaptic() const { return has_params() || kind == LayerKind::kAvgPool; }
  Shape weight_shape() const;
  std::size_t param_count() const;
  /// Synapses per output neuron (ignoring zero padding).
  std::size_t fan_in() const;
  /// Number of independently constrained weight rows (dense: neurons,
  /// conv: output channels, since a kernel is shared across positions).
  std::size_t constrained_rows() const;
  void validate() const;
};

/// Ordered layers plus one weight tensor per layer (empty for parameter-free
/// layers). Biases do not exist: every affine map is bias-free.
struct Network {
  std::vector<LayerSpec> layers;
  std::vector<Tensor> weights;

  std::size_t input_size() const { return layers.front().in.size(); }
  std::size_t output_size() const { return layers.back().out.size(); }
  /// Index of the last synaptic layer, whose membrane potential is the
  /// network output.
  std::size_t readout_index() const;
  /// Layers carrying the weight-sum constraint: parameterised layers that
  /// become spiking neurons. The readout layer is linear in its inputs' spike
  /// times for any weight sum, so it is left free.
  bool constrained(std::size_t i) const { return layers[i].has_params() && i != readout_index(); }
  /// Checks layer chaining, weight shapes and the membrane-readout rule that
  /// the last layer applies no activation.
  void validate() const;
  std::size_t param_count() const;
};

/// Builds a network with zero-filled weights.
Network make_network(std::vector<LayerSpec> layers);

/// conv: N(0, 2/(k^2 n)) with n output channels; dense: N(0, 1e-4), or
/// N(0, dense_gain / fan_in) when dense_gain > 0.
Network init_weights(Network net, std::uint64_t seed, double dense_gain = 0.0);

inline double relu1(double x) {
  if (x <= 0.0) return 0.0;
  if (x > 1.0) return 1.0;
  return x;
}

Tensor apply_activation(Activation act, const Tensor& pre);

/// Inverted dropout. Training: each element is zeroed with probability p and
/// survivors are scaled by 1/(1-p). Inference: identity. When `mask` is not
/// null it receives the per-element scale.
Tensor dropout(const Tensor& x, double p, bool training, std::uint64_t seed,
               Tensor* mask = nullptr);
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng,
               Tensor* mask = nullptr);

/// Cached forward state, one entry per layer index. All tensors are
/// [batch x features].
struct ForwardTrace {
  std::vector<Tensor> inputs;
  std::vector<Tensor> pre;      // affine output of synaptic layers, empty otherwise
  std::vector<Tensor> outputs;  // after activation / dropout
  std::vector<Tensor> masks;    // dropout scale masks (training only)
};

struct ForwardResult {
  Tensor output;
  ForwardTrace trace;
};

struct ForwardOptions {
  bool record = false;
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
  bool check_input_range = true;
};

/// Runs the network on `input` ([batch x input_size], or a single
/// [input_size] vector). Hidden layers apply their activation to the
/// bias-free pre-activation; the final layer returns its raw pre-activation.
ForwardResult ann_forward(const Network& net, const Tensor& input, const ForwardOptions& opts = {});

/// Gradient of one layer given cached forward state. `upstream` is the
/// gradient with respect to the layer output (after activation/dropout);
/// `extra_pre_grad`, when non-empty, is added at the pre-activation.
Gradients layer_backward(const LayerSpec& spec, const Tensor& weights, const ForwardTrace& trace,
                         std::size_t layer, const Tensor& upstream,
                         const Tensor& extra_pre_grad = Tensor(), bool want_input_grad = true);

/// Backpropagates `output_grad` (w.r.t. the final pre-activation) through
/// the whole network. `extra_pre_grads` is either empty or aligned with the
/// layers. Returns one gradient tensor per layer (empty for parameter-free).
std::vector<Tensor> network_backward(const Network& net, const ForwardTrace& trace,
                                     const Tensor& output_grad,
                                     const std::vector<Tensor>& extra_pre_grads = {});

}  // namespace ttfs
