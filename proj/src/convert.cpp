#include "ttfs/convert.hpp"

#include <algorithm>
#include <cmath>

#include "ttfs/losses.hpp"

namespace ttfs {

ThresholdSchedule ThresholdSchedule::uniform(std::size_t frames, double window_length) {
  ThresholdSchedule s;
  s.window_length = window_length;
  for (std::size_t f = 0; f < frames; ++f) {
    s.windows.push_back({static_cast<double>(f) * window_length,
                         static_cast<double>(f + 1) * window_length});
  }
  s.validate();
  return s;
}

double ThresholdSchedule::threshold_at(std::size_t frame, double t) const {
  const Window& w = windows.at(frame);
  if (t < w.start) return std::numeric_limits<double>::infinity();
  if (t < w.end) return threshold;
  return -std::numeric_limits<double>::infinity();
}

void ThresholdSchedule::validate() const {
  if (!(window_length > 0.0)) throw ConfigError("window length must be positive");
  if (!(threshold > 0.0)) throw ConfigError("firing threshold must be positive");
  for (std::size_t f = 0; f < windows.size(); ++f) {
    if (!(windows[f].end > windows[f].start)) throw ConfigError("empty threshold window");
    if (f > 0 && windows[f].start != windows[f - 1].end) {
      throw ConfigError("threshold windows must be consecutive");
    }
  }
  if (!windows.empty() && windows.front().start != 0.0) {
    throw ConfigError("the first window must open at t = 0");
  }
}

bool ConvertReport::pass() const {
  for (const auto& l : layers) {
    if (!l.deviation_ok || !l.activation_ok) return false;
  }
  return !layers.empty();
}

double ConvertReport::max_deviation() const {
  double worst = 0.0;
  for (const auto& l : layers) worst = std::max(worst, l.max_deviation);
  return worst;
}

namespace {

std::string refusal_message(const ConvertReport& r) {
  std::string msg = "conversion refused";
  for (const auto& issue : r.issues) msg += "; " + issue;
  return msg;
}

}  // namespace

ConversionRefused::ConversionRefused(ConvertReport report)
    : std::runtime_error(refusal_message(report)), report_(std::move(report)) {}

ConvertReport verify_convertibility(const Network& net) {
  net.validate();
  ConvertReport r;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.is_synaptic()) continue;
    LayerAudit a;
    a.ann_index = i;
    a.kind = l.kind;
    a.activation = l.activation;
    a.output = i == net.readout_index();
    if (net.constrained(i)) {
      a.max_deviation = max_weight_sum_deviation(l, net.weights[i]);
      a.deviation_ok = a.max_deviation <= ConvertReport::kDeviationTolerance;
      if (!a.deviation_ok) {
        r.issues.push_back("layer " + std::to_string(i) + " weight sums deviate by up to " +
                           std::to_string(a.max_deviation));
      }
    }
    if (l.has_params() && !a.output && l.activation != Activation::kRelu1) {
      a.activation_ok = false;
      r.issues.push_back("layer " + std::to_string(i) + " uses activation '" +
                         to_string(l.activation) + "' instead of relu1");
    }
    r.layers.push_back(a);
  }
  return r;
}

SpikeFrame encode_input(std::span<const double> activations) {
  SpikeFrame f;
  f.layer = 0;
  f.times.reserve(activations.size());
  for (double a : activations) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw DomainError("input activation " + std::to_string(a) + " outside [0,1]");
    }
    f.times.push_back(1.0 - a);
  }
  return f;
}

std::vector<double> decode_spikes(const SpikeFrame& frame, std::size_t layer,
                                  double window_length) {
  if (frame.layer != layer) {
    throw SequencingError("frame of layer " + std::to_string(frame.layer) +
                          " decoded as layer " + std::to_string(layer));
  }
  const double start = static_cast<double>(layer) * window_length;
  const double end = static_cast<double>(layer + 1) * window_length;
  std::vector<double> a(frame.times.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = frame.times[i];
    if (!(t >= start && t <= end)) {
      throw DomainError("spike time " + std::to_string(t) + " of neuron " + std::to_string(i) +
                        " outside window [" + std::to_string(start) + ", " +
                        std::to_string(end) + "]");
    }
    a[i] = (end - t) / window_length;
  }
  return a;
}

namespace {

std::vector<std::uint32_t> compute_fan_out(const LayerSpec& l) {
  std::vector<std::uint32_t> fan(l.in.size(), 0);
  switch (l.kind) {
    case LayerKind::kDense:
      std::fill(fan.begin(), fan.end(), static_cast<std::uint32_t>(l.out.size()));
      break;
    case LayerKind::kAvgPool:
      std::fill(fan.begin(), fan.end(), 1u);
      break;
    case LayerKind::kConv2d: {
      const auto H = static_cast<long>(l.in.height);
      const auto W = static_cast<long>(l.in.width);
      for (std::size_t oy = 0; oy < l.out.height; ++oy) {
        for (std::size_t ox = 0; ox < l.out.width; ++ox) {
          for (std::size_t ky = 0; ky < l.kernel; ++ky) {
            for (std::size_t kx = 0; kx < l.kernel; ++kx) {
              const long iy = static_cast<long>(oy * l.stride + ky) - static_cast<long>(l.padding);
              const long ix = static_cast<long>(ox * l.stride + kx) - static_cast<long>(l.padding);
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              for (std::size_t c = 0; c < l.in.channels; ++c) {
                fan[(c * l.in.height + static_cast<std::size_t>(iy)) * l.in.width +
                    static_cast<std::size_t>(ix)] += static_cast<std::uint32_t>(l.out.channels);
              }
            }
          }
        }
      }
      break;
    }
    default:
      break;
  }
  return fan;
}

}  // namespace

SpikingNetwork convert(const Network& net, bool force) {
  ConvertReport report = verify_convertibility(net);
  if (!report.pass()) {
    if (!force) throw ConversionRefused(std::move(report));
    report.forced = true;
  }
  SpikingNetwork snn;
  std::size_t frame = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.is_synaptic()) continue;
    SpikingLayer s;
    s.spec = l;
    s.ann_index = i;
    s.output = i + 1 == net.layers.size();
    s.frame = ++frame;
    s.weights = net.weights[i];
    s.fan_out = compute_fan_out(l);
    snn.layers.push_back(std::move(s));
  }
  snn.schedule = ThresholdSchedule::uniform(snn.layers.size());
  snn.report = std::move(report);
  return snn;
}

}  // namespace ttfs
