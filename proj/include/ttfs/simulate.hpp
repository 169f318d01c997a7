#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ttfs/convert.hpp"

namespace ttfs {

enum class Backend { kDiscrete, kExact };
enum class ThresholdMode { kDynamic, kFixed };

std::string to_string(Backend b);
std::string to_string(ThresholdMode m);
Backend parse_backend(const std::string& s);
ThresholdMode parse_threshold_mode(const std::string& s);

struct SimConfig {
  int steps_per_window = 50;
  Backend backend = Backend::kDiscrete;
  ThresholdMode threshold = ThresholdMode::kDynamic;

  /// Step length in window units.
  double dt(double window_length = 1.0) const { return window_length / steps_per_window; }
  void validate() const;
};

/// Grid comparisons use V >= threshold - kThresholdTolerance so that a
/// crossing landing exactly on a grid point is not pushed to the next one by
/// rounding.
inline constexpr double kThresholdTolerance = 1e-12;

struct OpCounters {
  std::uint64_t syn_ops = 0;
  std::uint64_t neuron_ops = 0;

  OpCounters& operator+=(const OpCounters& o) {
    syn_ops += o.syn_ops;
    neuron_ops += o.neuron_ops;
    return *this;
  }
  bool operator==(const OpCounters&) const = default;
};

/// Sampled membrane potential per neuron: grid points for the discrete
/// backend, segment breakpoints for the exact one.
struct MembraneTrace {
  std::vector<std::vector<double>> times;
  std::vector<std::vector<double>> values;
};

/// V(t) = sum over inputs with t_j <= t of w_j (t - t_j).
double membrane_potential(std::span<const double> times, std::span<const double> weights,
                          double t);

/// First time t >= t_a with V(t) >= theta, or t_b if V stays below theta
/// inside [t_a, t_b). Fixed mode drops the t_a bound, runs up to t_b and
/// returns kNoSpike when no crossing happens. Inputs need not be sorted;
/// simultaneous inputs merge into one event.
double solve_spike_exact(std::span<const double> times, std::span<const double> weights,
                         double theta, double t_a, double t_b,
                         ThresholdMode mode = ThresholdMode::kDynamic);

/// Discrete-time counterpart on the grid t_k = k T / steps: first grid point
/// k >= t_a with V(t_k) >= theta. V is evaluated exactly at grid points,
/// including the partial-step contribution of inputs that arrive between
/// grid points.
double solve_spike_discrete(std::span<const double> times, std::span<const double> weights,
                            double theta, double t_a, double t_b, int steps_per_window,
                            ThresholdMode mode = ThresholdMode::kDynamic,
                            double window_length = 1.0);

/// Runs spiking layer `layer` (an index into snn.layers, not the output
/// layer) on the frame emitted by its predecessor.
SpikeFrame simulate_layer(const SpikingNetwork& snn, std::size_t layer, const SpikeFrame& input,
                          const SimConfig& cfg, OpCounters* counters = nullptr,
                          MembraneTrace* trace = nullptr);
SpikeFrame simulate_discrete(const SpikingNetwork& snn, std::size_t layer,
                             const SpikeFrame& input, SimConfig cfg,
                             OpCounters* counters = nullptr, MembraneTrace* trace = nullptr);
SpikeFrame simulate_exact(const SpikingNetwork& snn, std::size_t layer, const SpikeFrame& input,
                          SimConfig cfg, OpCounters* counters = nullptr,
                          MembraneTrace* trace = nullptr);

/// Membrane potential of the output layer at the readout time.
std::vector<double> readout_membrane(const SpikingNetwork& snn, const SpikeFrame& input,
                                     const SimConfig& cfg, OpCounters* counters = nullptr);

struct NetworkRun {
  std::vector<double> output;
  std::vector<SpikeFrame> frames;  // input frame first, one per hidden layer
  OpCounters counters;
};

NetworkRun run_network(const SpikingNetwork& snn, std::span<const double> input,
                       const SimConfig& cfg);

/// Activation equivalents of every hidden frame (frames[1..]).
std::vector<std::vector<double>> decode_run(const SpikingNetwork& snn, const NetworkRun& run);

}  // namespace ttfs
