#include "ttfs/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace ttfs {

std::vector<LayerError> conversion_error(const std::vector<std::vector<double>>& ann,
                                         const std::vector<std::vector<double>>& snn) {
  ErrorAccumulator acc;
  acc.add(ann, snn);
  return acc.result();
}

void ErrorAccumulator::add(const std::vector<std::vector<double>>& ann,
                           const std::vector<std::vector<double>>& snn) {
  if (ann.size() != snn.size()) {
    throw ShapeError(std::to_string(ann.size()) + " ANN layers vs " + std::to_string(snn.size()) +
                     " SNN layers");
  }
  if (sum_.empty()) {
    sum_.assign(ann.size(), 0.0);
    max_.assign(ann.size(), 0.0);
    count_.assign(ann.size(), 0);
  } else if (sum_.size() != ann.size()) {
    throw ShapeError("layer count changed between samples");
  }
  for (std::size_t l = 0; l < ann.size(); ++l) {
    if (ann[l].size() != snn[l].size()) {
      throw ShapeError("layer " + std::to_string(l) + ": " + std::to_string(ann[l].size()) +
                       " vs " + std::to_string(snn[l].size()) + " activations");
    }
    for (std::size_t i = 0; i < ann[l].size(); ++i) {
      const double e = std::abs(ann[l][i] - snn[l][i]);
      sum_[l] += e;
      max_[l] = std::max(max_[l], e);
    }
    count_[l] += ann[l].size();
  }
}

std::vector<LayerError> ErrorAccumulator::result() const {
  std::vector<LayerError> out(sum_.size());
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l].mean = count_[l] ? sum_[l] / static_cast<double>(count_[l]) : 0.0;
    out[l].max = max_[l];
  }
  return out;
}

double power_proxy(const OpCounters& c, double neuron_op_weight) {
  if (neuron_op_weight < 0.0) throw ConfigError("neuron-op weight must be nonnegative");
  return static_cast<double>(c.syn_ops) + neuron_op_weight * static_cast<double>(c.neuron_ops);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError(std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double psnr(std::span<const double> reference, std::span<const double> test, double peak) {
  if (reference.size() != test.size() || reference.empty()) {
    throw ShapeError("psnr: " + std::to_string(reference.size()) + " vs " +
                     std::to_string(test.size()) + " values");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(std::span<const double> reference, std::span<const double> test, std::size_t height,
            std::size_t width, double peak) {
  constexpr std::size_t kWin = 11;
  constexpr double kSigma = 1.5;
  if (reference.size() != height * width || test.size() != height * width) {
    throw ShapeError("ssim: images do not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (height < kWin || width < kWin) {
    throw ShapeError("ssim: image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the 11x11 window");
  }
  double g[kWin];
  double gsum = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double x = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  double total = 0.0;
  std::size_t positions = 0;
  for (std::size_t y = 0; y + kWin <= height; ++y) {
    for (std::size_t x = 0; x + kWin <= width; ++x) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (std::size_t dy = 0; dy < kWin; ++dy) {
        for (std::size_t dx = 0; dx < kWin; ++dx) {
          const double w = g[dy] * g[dx];
          const double a = reference[(y + dy) * width + x + dx];
          const double b = test[(y + dy) * width + x + dx];
          mx += w * a;
          my += w * b;
          sxx += w * a * a;
          syy += w * b * b;
          sxy += w * a * b;
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++positions;
    }
  }
  return total / static_cast<double>(positions);
}

SpikeHistogram::SpikeHistogram(std::size_t frames, std::size_t bins_per_window,
                               double window_length)
    : bins_per_window_(bins_per_window), window_length_(window_length),
      counts_(frames, std::vector<std::uint64_t>(frames * bins_per_window, 0)),
      outside_(frames, 0), missing_(frames, 0), spikes_(frames, 0) {
  if (bins_per_window == 0) throw ConfigError("bins per window must be positive");
}

double SpikeHistogram::bin_start(std::size_t bin) const {
  return static_cast<double>(bin) * window_length_ / static_cast<double>(bins_per_window_);
}

double SpikeHistogram::bin_end(std::size_t bin) const { return bin_start(bin + 1); }

void SpikeHistogram::add(const SpikeFrame& frame) {
  const std::size_t f = frame.layer;
  if (f >= frames()) {
    throw ShapeError("histogram covers " + std::to_string(frames()) + " frames, got frame " +
                     std::to_string(f));
  }
  const double start = static_cast<double>(f) * window_length_;
  const double end = static_cast<double>(f + 1) * window_length_;
  const double total_end = static_cast<double>(frames()) * window_length_;
  auto& row = counts_[f];
  for (double t : frame.times) {
    if (!std::isfinite(t)) {
      ++missing_[f];
      continue;
    }
    ++spikes_[f];
    if (t < start || t > end) ++outside_[f];
    std::size_t bin;
    if (t == end) {
      bin = (f + 1) * bins_per_window_ - 1;
    } else if (t <= 0.0) {
      bin = 0;
    } else if (t >= total_end) {
      bin = bins() - 1;
    } else {
      bin = std::min(bins() - 1, static_cast<std::size_t>(t / window_length_ *
                                                          static_cast<double>(bins_per_window_)));
    }
    ++row[bin];
  }
}

void SpikeHistogram::merge(const SpikeHistogram& other) {
  if (counts_.empty()) {
    *this = other;
    return;
  }
  if (other.frames() != frames() || other.bins_per_window_ != bins_per_window_) {
    throw ShapeError("cannot merge histograms of different geometry");
  }
  for (std::size_t f = 0; f < frames(); ++f) {
    for (std::size_t b = 0; b < bins(); ++b) counts_[f][b] += other.counts_[f][b];
    outside_[f] += other.outside_[f];
    missing_[f] += other.missing_[f];
    spikes_[f] += other.spikes_[f];
  }
}

void SpikeHistogram::restore(std::size_t frame, std::vector<std::uint64_t> counts,
                             std::uint64_t outside, std::uint64_t missing) {
  if (frame >= frames() || counts.size() != bins()) {
    throw ShapeError("histogram row does not match " + std::to_string(frames()) + " frames x " +
                     std::to_string(bins()) + " bins");
  }
  std::uint64_t spikes = 0;
  for (auto c : counts) spikes += c;
  counts_[frame] = std::move(counts);
  outside_[frame] = outside;
  missing_[frame] = missing;
  spikes_[frame] = spikes;
}

std::uint64_t SpikeHistogram::total_out_of_window() const {
  std::uint64_t n = 0;
  for (auto v : outside_) n += v;
  return n;
}

double SpikeHistogram::out_of_window_fraction() const {
  std::uint64_t spikes = 0;
  for (auto v : spikes_) spikes += v;
  return spikes ? static_cast<double>(total_out_of_window()) / static_cast<double>(spikes) : 0.0;
}

std::string report_to_json(const RunReport& r, int indent) {
  nlohmann::json j;
  j["task"] = r.task;
  j["split"] = r.split;
  j["samples"] = r.samples;
  j["backend"] = r.backend;
  j["threshold"] = r.threshold;
  j["steps_per_window"] = r.steps_per_window;
  if (r.task == "classification") {
    j["ann_accuracy"] = r.ann_accuracy;
    j["snn_accuracy"] = r.snn_accuracy;
    j["accuracy_delta"] = r.accuracy_delta();
    j["argmax_agreement"] = r.argmax_agreement;
  } else {
    j["ann_psnr"] = r.ann_psnr;
    j["snn_psnr"] = r.snn_psnr;
    j["ann_ssim"] = r.ann_ssim;
    j["snn_ssim"] = r.snn_ssim;
  }
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& e : r.conversion_error) errs.push_back({{"mean", e.mean}, {"max", e.max}});
  j["conversion_error"] = errs;
  j["max_output_gap"] = r.max_output_gap;
  j["syn_ops"] = r.counters.syn_ops;
  j["neuron_ops"] = r.counters.neuron_ops;
  j["neuron_op_weight"] = r.neuron_op_weight;
  j["power_proxy"] = r.power_proxy;
  j["out_of_window_fraction"] = r.out_of_window_fraction;
  j["missing_spikes"] = r.missing_spikes;
  if (r.histogram.frames() > 0) {
    nlohmann::json h;
    h["bins_per_window"] = r.histogram.bins_per_window();
    h["window_length"] = r.histogram.window_length();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t f = 0; f < r.histogram.frames(); ++f) {
      rows.push_back({{"frame", f},
                      {"counts", r.histogram.counts(f)},
                      {"out_of_window", r.histogram.out_of_window(f)},
                      {"missing", r.histogram.missing(f)}});
    }
    h["frames"] = rows;
    j["histogram"] = h;
  }
  return j.dump(indent);
}

RunReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("run report: ") + e.what(), e.byte);
  }
  RunReport r;
  r.task = j.at("task").get<std::string>();
  r.split = j.value("split", "");
  r.samples = j.value("samples", std::size_t{0});
  r.backend = j.value("backend", "");
  r.threshold = j.value("threshold", "");
  r.steps_per_window = j.value("steps_per_window", 0);
  r.ann_accuracy = j.value("ann_accuracy", 0.0);
  r.snn_accuracy = j.value("snn_accuracy", 0.0);
  r.argmax_agreement = j.value("argmax_agreement", 0.0);
  r.ann_psnr = j.value("ann_psnr", 0.0);
  r.snn_psnr = j.value("snn_psnr", 0.0);
  r.ann_ssim = j.value("ann_ssim", 0.0);
  r.snn_ssim = j.value("snn_ssim", 0.0);
  for (const auto& e : j.value("conversion_error", nlohmann::json::array())) {
    r.conversion_error.push_back({e.at("mean").get<double>(), e.at("max").get<double>()});
  }
  r.max_output_gap = j.value("max_output_gap", 0.0);
  r.counters.syn_ops = j.value("syn_ops", std::uint64_t{0});
  r.counters.neuron_ops = j.value("neuron_ops", std::uint64_t{0});
  r.neuron_op_weight = j.value("neuron_op_weight", 1.0);
  r.power_proxy = j.value("power_proxy", 0.0);
  r.out_of_window_fraction = j.value("out_of_window_fraction", 0.0);
  r.missing_spikes = j.value("missing_spikes", std::uint64_t{0});
  if (j.contains("histogram")) {
    const auto& h = j["histogram"];
    const auto& rows = h.at("frames");
    SpikeHistogram hist(rows.size(), h.at("bins_per_window").get<std::size_t>(),
                        h.value("window_length", 1.0));
    for (const auto& row : rows) {
      hist.restore(row.at("frame").get<std::size_t>(),
                   row.at("counts").get<std::vector<std::uint64_t>>(),
                   row.value("out_of_window", std::uint64_t{0}),
                   row.value("missing", std::uint64_t{0}));
    }
    r.histogram = std::move(hist);
  }
  return r;
}

}  // namespace ttfs
