#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ttfs/simulate.hpp"

namespace ttfs {

struct LayerError {
  double mean = 0.0;
  double max = 0.0;
};

/// Per-layer mean and max of |a_ann - a_snn|.
std::vector<LayerError> conversion_error(const std::vector<std::vector<double>>& ann,
                                         const std::vector<std::vector<double>>& snn);

/// Running version of conversion_error across samples.
class ErrorAccumulator {
 public:
  void add(const std::vector<std::vector<double>>& ann,
           const std::vector<std::vector<double>>& snn);
  std::vector<LayerError> result() const;

 private:
  std::vector<double> sum_;
  std::vector<double> max_;
  std::vector<std::uint64_t> count_;
};

/// P = syn_ops + neuron_op_weight * neuron_ops.
double power_proxy(const OpCounters& counters, double neuron_op_weight = 1.0);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

inline constexpr double kPsnrCap = 100.0;

double psnr(std::span<const double> reference, std::span<const double> test, double peak = 1.0);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// all window positions fully inside the image.
double ssim(std::span<const double> reference, std::span<const double> test, std::size_t height,
            std::size_t width, double peak = 1.0);

/// Spike-time histogram over the whole schedule [0, frames T], one row of
/// counts per frame. Spikes at exactly a window end count in that window's
/// last bin.
class SpikeHistogram {
 public:
  SpikeHistogram() = default;
  SpikeHistogram(std::size_t frames, std::size_t bins_per_window, double window_length = 1.0);

  void add(const SpikeFrame& frame);
  void merge(const SpikeHistogram& other);
  /// Overwrites one frame's tallies, e.g. when reading a saved report.
  void restore(std::size_t frame, std::vector<std::uint64_t> counts, std::uint64_t outside,
               std::uint64_t missing);

  std::size_t frames() const { return counts_.size(); }
  std::size_t bins_per_window() const { return bins_per_window_; }
  std::size_t bins() const { return frames() * bins_per_window_; }
  double window_length() const { return window_length_; }
  double bin_start(std::size_t bin) const;
  double bin_end(std::size_t bin) const;
  const std::vector<std::uint64_t>& counts(std::size_t frame) const { return counts_.at(frame); }
  /// Spikes of frame f outside [f T, (f+1) T].
  std::uint64_t out_of_window(std::size_t frame) const { return outside_.at(frame); }
  std::uint64_t missing(std::size_t frame) const { return missing_.at(frame); }
  std::uint64_t total_out_of_window() const;
  double out_of_window_fraction() const;

 private:
  std::size_t bins_per_window_ = 0;
  double window_length_ = 1.0;
  std::vector<std::vector<std::uint64_t>> counts_;
  std::vector<std::uint64_t> outside_;
  std::vector<std::uint64_t> missing_;
  std::vector<std::uint64_t> spikes_;
};

struct RunReport {
  std::string task;  // "classification" or "reconstruction"
  std::string split;
  std::size_t samples = 0;
  std::string backend;
  std::string threshold;
  int steps_per_window = 0;

  double ann_accuracy = 0.0;
  double snn_accuracy = 0.0;
  double argmax_agreement = 0.0;
  double ann_psnr = 0.0;
  double snn_psnr = 0.0;
  double ann_ssim = 0.0;
  double snn_ssim = 0.0;

  std::vector<LayerError> conversion_error;
  double max_output_gap = 0.0;  // max |V_snn - z_ann| over output neurons
  OpCounters counters;
  double neuron_op_weight = 1.0;
  double power_proxy = 0.0;
  double out_of_window_fraction = 0.0;
  std::uint64_t missing_spikes = 0;
  SpikeHistogram histogram;

  double accuracy_delta() const { return ann_accuracy - snn_accuracy; }
};

std::string report_to_json(const RunReport& r, int indent = 2);
RunReport report_from_json(const std::string& text);

}  // namespace ttfs
