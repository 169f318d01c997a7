#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttfs/network.hpp"

namespace ttfs {

/// Marks a neuron that never fired (fixed-threshold mode only).
inline constexpr double kNoSpike = std::numeric_limits<double>::infinity();

struct Window {
  double start = 0.0;
  double end = 1.0;
};

/// Frame f (0 = input encoding, f >= 1 = hidden spiking layer f) owns the
/// window [f T, (f+1) T]. The output layer does not spike; its membrane
/// potential is read out when the last frame closes, at L T.
struct ThresholdSchedule {
  double window_length = 1.0;
  double threshold = 1.0;
  std::vector<Window> windows;

  static ThresholdSchedule uniform(std::size_t frames, double window_length = 1.0);
  std::size_t frames() const { return windows.size(); }
  double readout_time() const { return windows.empty() ? 0.0 : windows.back().end; }
  /// Piecewise threshold of frame f: +inf before its window, the firing
  /// threshold inside it, -inf from the window end on.
  double threshold_at(std::size_t frame, double t) const;
  void validate() const;
};

/// One spike time per neuron of one frame.
struct SpikeFrame {
  std::size_t layer = 0;
  std::vector<double> times;
};

struct LayerAudit {
  std::size_t ann_index = 0;
  LayerKind kind = LayerKind::kDense;
  Activation activation = Activation::kNone;
  bool output = false;
  double max_deviation = 0.0;
  bool deviation_ok = true;
  bool activation_ok = true;
};

struct ConvertReport {
  static constexpr double kDeviationTolerance = 1e-9;

  std::vector<LayerAudit> layers;
  std::vector<std::string> issues;
  bool forced = false;

  bool pass() const;
  double max_deviation() const;
};

class ConversionRefused : public std::runtime_error {
 public:
  explicit ConversionRefused(ConvertReport report);
  const ConvertReport& report() const { return report_; }

 private:
  ConvertReport report_;
};

ConvertReport verify_convertibility(const Network& net);

/// t = 1 - a for every input value.
SpikeFrame encode_input(std::span<const double> activations);
/// a = (l+1) T - t. Times outside [l T, (l+1) T] (or missing spikes) are
/// domain errors.
std::vector<double> decode_spikes(const SpikeFrame& frame, std::size_t layer,
                                  double window_length = 1.0);

struct SpikingLayer {
  LayerSpec spec;
  Tensor weights;  // copied from the ANN; avgpool layers use frozen 1/window^2
  std::size_t ann_index = 0;
  std::size_t frame = 0;  // frame this layer emits (output layer: readout frame index)
  bool output = false;
  /// Number of synapses each presynaptic neuron drives in this layer.
  std::vector<std::uint32_t> fan_out;
};

struct SpikingNetwork {
  std::vector<SpikingLayer> layers;
  ThresholdSchedule schedule;
  ConvertReport report;

  std::size_t input_size() const { return layers.front().spec.in.size(); }
  std::size_t output_size() const { return layers.back().spec.out.size(); }
};

/// Copies the weights of every synaptic layer verbatim. Dropout and flatten
/// layers vanish. Refuses a failing network unless `force` is set.
SpikingNetwork convert(const Network& net, bool force = false);

}  // namespace ttfs
