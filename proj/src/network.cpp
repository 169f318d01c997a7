#include "ttfs/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ttfs {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kNone: return "none";
    case Activation::kRelu1: return "relu1";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "dense") return LayerKind::kDense;
  if (s == "conv2d") return LayerKind::kConv2d;
  if (s == "avgpool") return LayerKind::kAvgPool;
  if (s == "dropout") return LayerKind::kDropout;
  if (s == "flatten") return LayerKind::kFlatten;
  throw ConfigError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu1") return Activation::kRelu1;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

LayerSpec LayerSpec::dense(std::size_t fan_in, std::size_t fan_out, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.in = {1, 1, fan_in};
  s.out = {1, 1, fan_out};
  s.activation = act;
  s.validate();
  return s;
}

LayerSpec LayerSpec::conv(Shape2D in, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride, std::size_t padding, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.in = in;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.out = {conv_output_extent(in.height, kernel, stride, padding),
           conv_output_extent(in.width, kernel, stride, padding), out_channels};
  s.activation = act;
  s.validate();
  return s;
}

LayerSpec LayerSpec::avgpool(Shape2D in, std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::kAvgPool;
  s.in = in;
  s.window = window;
  if (window == 0 || in.height % window != 0 || in.width % window != 0) {
    throw ShapeError("pool window " + std::to_string(window) + " does not divide " +
                     in.to_string());
  }
  s.out = {in.height / window, in.width / window, in.channels};
  s.validate();
  return s;
}

LayerSpec LayerSpec::dropout_layer(Shape2D shape, double p) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.in = shape;
  s.out = shape;
  s.dropout = p;
  s.validate();
  return s;
}

LayerSpec LayerSpec::flatten(Shape2D in) {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  s.in = in;
  s.out = {1, 1, in.size()};
  s.validate();
  return s;
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::kDense: return {out.size(), in.size()};
    case LayerKind::kConv2d: return {out.channels, in.channels, kernel, kernel};
    default: return {};
  }
}

std::size_t LayerSpec::param_count() const {
  return has_params() ? shape_size(weight_shape()) : 0;
}

std::size_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::kDense: return in.size();
    case LayerKind::kConv2d: return in.channels * kernel * kernel;
    case LayerKind::kAvgPool: return window * window;
    default: return 1;
  }
}

std::size_t LayerSpec::constrained_rows() const {
  switch (kind) {
    case LayerKind::kDense: return out.size();
    case LayerKind::kConv2d: return out.channels;
    default: return 0;
  }
}

void LayerSpec::validate() const {
  in.validate();
  out.validate();
  switch (kind) {
    case LayerKind::kDense:
      if (in.height != 1 || in.width != 1 || out.height != 1 || out.width != 1) {
        throw ShapeError("dense layers take flat vectors; got " + in.to_string() + " -> " +
                         out.to_string());
      }
      break;
    case LayerKind::kConv2d:
      if (out.height != conv_output_extent(in.height, kernel, stride, padding) ||
          out.width != conv_output_extent(in.width, kernel, stride, padding)) {
        throw ShapeError("conv output " + out.to_string() + " inconsistent with input " +
                         in.to_string());
      }
      break;
    case LayerKind::kAvgPool:
      if (window == 0 || in.height != out.height * window || in.width != out.width * window ||
          in.channels != out.channels) {
        throw ShapeError("avgpool geometry inconsistent: " + in.to_string() + " -> " +
                         out.to_string());
      }
      break;
    case LayerKind::kDropout:
      if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("dropout probability must lie in [0,1), got " + std::to_string(dropout));
      }
      [[fallthrough]];
    case LayerKind::kFlatten:
      if (in.size() != out.size()) throw ShapeError("reshaping layers must preserve size");
      if (activation != Activation::kNone) {
        throw ConfigError(to_string(kind) + " layers carry no activation");
      }
      break;
  }
}

void Network::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  if (weights.size() != layers.size()) {
    throw ShapeError("network has " + std::to_string(weights.size()) + " weight slots for " +
                     std::to_string(layers.size()) + " layers");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i + 1 < layers.size() && layers[i].out.size() != layers[i + 1].in.size()) {
      throw ShapeError("layer " + std::to_string(i) + " output " + layers[i].out.to_string() +
                       " does not feed layer " + std::to_string(i + 1) + " input " +
                       layers[i + 1].in.to_string());
    }
    if (layers[i].has_params()) {
      if (weights[i].shape() != layers[i].weight_shape()) {
        throw ShapeError("layer " + std::to_string(i) + " weights " +
                         shape_string(weights[i].shape()) + ", expected " +
                         shape_string(layers[i].weight_shape()));
      }
    } else if (!weights[i].empty()) {
      throw ShapeError("parameter-free layer " + std::to_string(i) + " holds weights");
    }
  }
  const LayerSpec& last = layers.back();
  if (!last.is_synaptic()) throw ConfigError("the final layer must be dense, conv2d or avgpool");
  if (last.has_activation()) {
    throw ConfigError("the final layer is read out as a membrane potential and must not apply "
                      "an activation");
  }
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

Network make_network(std::vector<LayerSpec> layers) {
  Network net;
  net.layers = std::move(layers);
  for (const auto& l : net.layers) {
    net.weights.push_back(l.has_params() ? Tensor(l.weight_shape()) : Tensor());
  }
  net.validate();
  return net;
}

std::size_t Network::readout_index() const {
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (layers[i].is_synaptic()) return i;
  }
  throw ConfigError("network has no synaptic layer");
}

Network init_weights(Network net, std::uint64_t seed, double dense_gain) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.has_params()) continue;
    double variance = dense_gain > 0.0 ? dense_gain / static_cast<double>(l.in.size()) : 1e-4;
    if (l.kind == LayerKind::kConv2d) {
      variance = 2.0 / static_cast<double>(l.kernel * l.kernel * l.out.channels);
    }
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    for (auto& w : net.weights[i].data()) w = normal(rng);
  }
  return net;
}

Tensor apply_activation(Activation act, const Tensor& pre) {
  if (act == Activation::kNone) return pre;
  Tensor out = pre;
  for (auto& v : out.data()) v = act == Activation::kRelu1 ? relu1(v) : (v > 0.0 ? v : 0.0);
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng, Tensor* mask) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0,1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  Tensor out = x;
  Tensor scale(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double survivor = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    scale[i] = keep(rng) ? survivor : 0.0;
    out[i] *= scale[i];
  }
  if (mask) *mask = std::move(scale);
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, std::uint64_t seed, Tensor* mask) {
  std::mt19937_64 rng(seed);
  return dropout(x, p, training, rng, mask);
}

namespace {

Tensor synaptic_forward(const LayerSpec& l, const Tensor& w, const Tensor& x) {
  const std::size_t batch = x.dim(0);
  switch (l.kind) {
    case LayerKind::kDense:
      return matmul_nt(x, w);
    case LayerKind::kConv2d: {
      Tensor z({batch, l.out.size()});
      for (std::size_t b = 0; b < batch; ++b) {
        kernels::conv2d(x.row(b), l.in, w.data(), l.out.channels, l.kernel, l.stride, l.padding,
                        z.row(b));
      }
      return z;
    }
    case LayerKind::kAvgPool: {
      Tensor z({batch, l.out.size()});
      for (std::size_t b = 0; b < batch; ++b) kernels::avgpool2d(x.row(b), l.in, l.window, z.row(b));
      return z;
    }
    default:
      throw std::logic_error("not a synaptic layer");
  }
}

}  // namespace

ForwardResult ann_forward(const Network& net, const Tensor& input, const ForwardOptions& opts) {
  Tensor x = input.rank() == 1 ? input.reshaped({1, input.size()}) : input;
  if (x.rank() != 2 || x.dim(1) != net.input_size()) {
    throw ShapeError("network expects [batch x " + std::to_string(net.input_size()) +
                     "] input, got " + shape_string(input.shape()));
  }
  if (opts.check_input_range) {
    for (double v : x.data()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("network input values must lie in [0,1], got " + std::to_string(v));
      }
    }
  }
  const bool keep = opts.record || opts.training;
  ForwardResult result;
  ForwardTrace& tr = result.trace;
  if (keep) {
    const std::size_t n = net.layers.size();
    tr.inputs.resize(n);
    tr.pre.resize(n);
    tr.outputs.resize(n);
    tr.masks.resize(n);
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (keep) tr.inputs[i] = x;
    Tensor y;
    if (l.is_synaptic()) {
      Tensor z = synaptic_forward(l, net.weights[i], x);
      y = apply_activation(l.activation, z);
      if (keep) tr.pre[i] = std::move(z);
    } else if (l.kind == LayerKind::kDropout) {
      if (opts.training && l.dropout > 0.0) {
        if (!opts.rng) throw ConfigError("training-mode dropout needs a random generator");
        y = dropout(x, l.dropout, true, *opts.rng, keep ? &tr.masks[i] : nullptr);
      } else {
        y = x;
      }
    } else {
      y = x;
    }
    if (keep) tr.outputs[i] = y;
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

Gradients layer_backward(const LayerSpec& l, const Tensor& w, const ForwardTrace& tr,
                         std::size_t i, const Tensor& upstream, const Tensor& extra_pre_grad,
                         bool want_input_grad) {
  const Tensor& x = tr.inputs.at(i);
  if (upstream.rank() != 2 || upstream.dim(0) != x.dim(0) || upstream.dim(1) != l.out.size()) {
    throw ShapeError("layer " + std::to_string(i) + " backward: upstream " +
                     shape_string(upstream.shape()) + " does not match output [" +
                     std::to_string(x.dim(0)) + "x" + std::to_string(l.out.size()) + "]");
  }
  if (l.kind == LayerKind::kDropout) {
    const Tensor& mask = tr.masks.at(i);
    return {mask.empty() ? upstream : dropout_backward(mask, upstream), Tensor()};
  }
  if (l.kind == LayerKind::kFlatten) return {upstream, Tensor()};

  const Tensor& pre = tr.pre.at(i);
  Tensor dz;
  switch (l.activation) {
    case Activation::kNone: dz = upstream; break;
    case Activation::kRelu1: dz = relu1_backward(pre, upstream); break;
    case Activation::kRelu: dz = relu_backward(pre, upstream); break;
  }
  if (!extra_pre_grad.empty()) {
    if (extra_pre_grad.shape() != dz.shape()) {
      throw ShapeError("pre-activation gradient " + shape_string(extra_pre_grad.shape()) +
                       " does not match " + shape_string(dz.shape()));
    }
    for (std::size_t k = 0; k < dz.size(); ++k) dz[k] += extra_pre_grad[k];
  }

  const std::size_t batch = x.dim(0);
  switch (l.kind) {
    case LayerKind::kDense:
      if (!want_input_grad) return {Tensor(), matmul_tn(dz, x)};
      return dense_backward(x, w, dz);
    case LayerKind::kConv2d: {
      Gradients g{Tensor(x.shape()), Tensor(w.shape())};
      for (std::size_t b = 0; b < batch; ++b) {
        kernels::conv2d_backward(x.row(b), l.in, w.data(), l.out.channels, l.kernel, l.stride,
                                 l.padding, dz.row(b), g.input.row(b), g.params.data());
      }
      return g;
    }
    case LayerKind::kAvgPool: {
      Gradients g{Tensor(x.shape()), Tensor()};
      for (std::size_t b = 0; b < batch; ++b) {
        kernels::avgpool2d_backward(l.in, l.window, dz.row(b), g.input.row(b));
      }
      return g;
    }
    default:
      throw std::logic_error("unreachable layer kind");
  }
}

std::vector<Tensor> network_backward(const Network& net, const ForwardTrace& trace,
                                     const Tensor& output_grad,
                                     const std::vector<Tensor>& extra_pre_grads) {
  if (trace.inputs.size() != net.layers.size()) {
    throw ShapeError("forward trace was not recorded");
  }
  if (!extra_pre_grads.empty() && extra_pre_grads.size() != net.layers.size()) {
    throw ShapeError("pre-activation gradients must align with layers");
  }
  std::vector<Tensor> grads(net.layers.size());
  Tensor upstream = output_grad;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const Tensor extra = extra_pre_grads.empty() ? Tensor() : extra_pre_grads[k];
    Gradients g = layer_backward(net.layers[k], net.weights[k], trace, k, upstream, extra, k > 0);
    grads[k] = std::move(g.params);
    upstream = std::move(g.input);
  }
  return grads;
}

}  // namespace ttfs
