#include "ttfs/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ttfs {

std::string to_string(Backend b) { return b == Backend::kDiscrete ? "discrete" : "exact"; }

std::string to_string(ThresholdMode m) {
  return m == ThresholdMode::kDynamic ? "dynamic" : "fixed";
}

Backend parse_backend(const std::string& s) {
  if (s == "discrete") return Backend::kDiscrete;
  if (s == "exact") return Backend::kExact;
  throw ConfigError("unknown backend '" + s + "' (expected discrete or exact)");
}

ThresholdMode parse_threshold_mode(const std::string& s) {
  if (s == "dynamic") return ThresholdMode::kDynamic;
  if (s == "fixed") return ThresholdMode::kFixed;
  throw ConfigError("unknown threshold mode '" + s + "' (expected dynamic or fixed)");
}

void SimConfig::validate() const {
  if (steps_per_window < 1) {
    throw ConfigError("steps_per_window must be >= 1, got " + std::to_string(steps_per_window));
  }
}

double membrane_potential(std::span<const double> times, std::span<const double> weights,
                          double t) {
  double v = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (times[j] <= t) v += weights[j] * (t - times[j]);
  }
  return v;
}

namespace {

struct Event {
  double t;
  double w;
};

void check_theta(double theta) {
  if (!(theta > 0.0)) throw ConfigError("firing threshold must be positive");
}

std::vector<Event> sorted_events(std::span<const double> times, std::span<const double> weights) {
  if (times.size() != weights.size()) {
    throw ShapeError(std::to_string(times.size()) + " input times vs " +
                     std::to_string(weights.size()) + " weights");
  }
  std::vector<Event> ev;
  ev.reserve(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (std::isfinite(times[j])) ev.push_back({times[j], weights[j]});
  }
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return ev;
}

// Walks merged events in time order. `lower` is the earliest admissible
// spike time, `limit` the end of the search range.
double exact_sorted(const std::vector<Event>& ev, double theta, double lower, double limit,
                    bool dynamic) {
  double slope = 0.0;
  double v = 0.0;
  double prev = 0.0;
  std::size_t i = 0;
  while (i < ev.size() && ev[i].t < limit) {
    const double tau = ev[i].t;
    if (i > 0) v += slope * (tau - prev);
    while (i < ev.size() && ev[i].t == tau) slope += ev[i++].w;
    prev = tau;
    const double seg_end = (i < ev.size() && ev[i].t < limit) ? ev[i].t : limit;
    const double lo = std::max(tau, lower);
    if (lo >= seg_end) continue;
    const double vlo = v + slope * (lo - tau);
    if (vlo >= theta) return lo;
    if (slope > 0.0) {
      const double t = lo + (theta - vlo) / slope;
      if (t < seg_end) return t;
    }
  }
  return dynamic ? limit : kNoSpike;
}

struct Grid {
  int steps;
  double window_length;

  double time(long k) const {
    return static_cast<double>(k) * window_length / static_cast<double>(steps);
  }
  // Smallest k with time(k) >= t.
  long ceil_index(double t) const {
    long k = static_cast<long>(std::ceil(t * steps / window_length));
    while (time(k - 1) >= t) --k;
    while (time(k) < t) ++k;
    return k;
  }
  // Largest k with time(k) <= t.
  long floor_index(double t) const {
    long k = static_cast<long>(std::floor(t * steps / window_length));
    while (time(k + 1) <= t) ++k;
    while (time(k) > t) --k;
    return k;
  }
};

// First grid index in [k_first, k_last] with v0 + slope (time(k) - tau) >=
// theta - tol, or -1.
long first_grid_crossing(const Grid& g, long k_first, long k_last, double v0, double slope,
                         double tau, double theta) {
  if (k_first > k_last) return -1;
  const double target = theta - kThresholdTolerance;
  auto ok = [&](long k) { return v0 + slope * (g.time(k) - tau) >= target; };
  if (ok(k_first)) return k_first;
  if (!(slope > 0.0)) return -1;
  const double t_star = tau + (target - v0) / slope;
  long k = std::max(k_first + 1, g.ceil_index(t_star));
  if (k > k_last + 1) k = k_last + 1;
  while (k - 1 > k_first && ok(k - 1)) --k;
  while (k <= k_last && !ok(k)) ++k;
  return k <= k_last ? k : -1;
}

// Returns the spike grid index or -1.
long discrete_sorted(const std::vector<Event>& ev, double theta, long k_lo, long k_hi,
                     const Grid& g) {
  double slope = 0.0;
  double v = 0.0;
  double prev = 0.0;
  std::size_t i = 0;
  const double t_hi = g.time(k_hi);
  while (i < ev.size() && ev[i].t <= t_hi) {
    const double tau = ev[i].t;
    if (i > 0) v += slope * (tau - prev);
    while (i < ev.size() && ev[i].t == tau) slope += ev[i++].w;
    prev = tau;
    long k_first = std::max(k_lo, g.ceil_index(tau));
    long k_last = k_hi;
    if (i < ev.size() && ev[i].t <= t_hi) k_last = std::min(k_hi, g.ceil_index(ev[i].t) - 1);
    const long k = first_grid_crossing(g, k_first, k_last, v, slope, tau, theta);
    if (k >= 0) return k;
  }
  return -1;
}

}  // namespace

double solve_spike_exact(std::span<const double> times, std::span<const double> weights,
                         double theta, double t_a, double t_b, ThresholdMode mode) {
  check_theta(theta);
  if (!(t_b > t_a)) throw ConfigError("spike window must have t_b > t_a");
  const bool dynamic = mode == ThresholdMode::kDynamic;
  return exact_sorted(sorted_events(times, weights), theta, dynamic ? t_a : 0.0, t_b, dynamic);
}

double solve_spike_discrete(std::span<const double> times, std::span<const double> weights,
                            double theta, double t_a, double t_b, int steps_per_window,
                            ThresholdMode mode, double window_length) {
  check_theta(theta);
  if (!(t_b > t_a)) throw ConfigError("spike window must have t_b > t_a");
  SimConfig{steps_per_window}.validate();
  const Grid g{steps_per_window, window_length};
  const bool dynamic = mode == ThresholdMode::kDynamic;
  const long k_lo = dynamic ? g.ceil_index(t_a) : 0;
  const long k_hi = g.floor_index(t_b);
  const long k = discrete_sorted(sorted_events(times, weights), theta, k_lo, k_hi, g);
  if (k >= 0) return g.time(k);
  return dynamic ? t_b : kNoSpike;
}

namespace {

// Calls fn(time, weight) for every synapse of output neuron `o`, including
// zero-padding positions, which behave as inputs firing at `pad_time`.
template <typename Fn>
void for_each_input(const SpikingLayer& L, std::size_t o, std::span<const double> in,
                    double pad_time, Fn&& fn) {
  const LayerSpec& s = L.spec;
  switch (s.kind) {
    case LayerKind::kDense: {
      const std::size_t d = s.in.size();
      const double* w = L.weights.data().data() + o * d;
      for (std::size_t j = 0; j < d; ++j) fn(in[j], w[j]);
      break;
    }
    case LayerKind::kConv2d: {
      const std::size_t plane = s.out.height * s.out.width;
      const std::size_t co = o / plane;
      const std::size_t oy = (o % plane) / s.out.width;
      const std::size_t ox = o % s.out.width;
      const std::size_t k = s.kernel;
      const double* w = L.weights.data().data() + co * s.in.channels * k * k;
      for (std::size_t ci = 0; ci < s.in.channels; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.padding);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.padding);
            const double wk = w[(ci * k + ky) * k + kx];
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.in.height) ||
                ix >= static_cast<long>(s.in.width)) {
              fn(pad_time, wk);
            } else {
              fn(in[(ci * s.in.height + static_cast<std::size_t>(iy)) * s.in.width +
                    static_cast<std::size_t>(ix)],
                 wk);
            }
          }
        }
      }
      break;
    }
    case LayerKind::kAvgPool: {
      const std::size_t plane = s.out.height * s.out.width;
      const std::size_t c = o / plane;
      const std::size_t oy = (o % plane) / s.out.width;
      const std::size_t ox = o % s.out.width;
      const double w = 1.0 / static_cast<double>(s.window * s.window);
      for (std::size_t dy = 0; dy < s.window; ++dy) {
        for (std::size_t dx = 0; dx < s.window; ++dx) {
          fn(in[(c * s.in.height + oy * s.window + dy) * s.in.width + ox * s.window + dx], w);
        }
      }
      break;
    }
    default:
      throw std::logic_error("not a spiking layer");
  }
}

struct LayerRun {
  const SpikingNetwork& snn;
  const SpikingLayer& layer;
  std::span<const double> in;
  const SimConfig& cfg;
  Grid grid;
  bool dynamic;
  double t_a;      // window start of this layer (also the zero-padding time)
  double t_b;      // window end (dynamic) or simulation horizon (fixed)
  long k_lo;
  long k_hi;
  std::vector<std::size_t> dense_order;  // input indices by spike time, built lazily

  LayerRun(const SpikingNetwork& n, const SpikingLayer& l, std::span<const double> input,
           const SimConfig& c)
      : snn(n), layer(l), in(input), cfg(c),
        grid{c.steps_per_window, n.schedule.window_length},
        dynamic(c.threshold == ThresholdMode::kDynamic) {
    const double T = n.schedule.window_length;
    const auto f = static_cast<long>(l.frame);
    t_a = static_cast<double>(f) * T;
    t_b = dynamic ? static_cast<double>(f + 1) * T : n.schedule.readout_time();
    k_lo = dynamic ? f * c.steps_per_window : 0;
    k_hi = dynamic ? (f + 1) * c.steps_per_window
                   : static_cast<long>(n.schedule.frames()) * c.steps_per_window;
  }

  std::vector<Event> gather_sorted(std::size_t o) {
    std::vector<Event> ev;
    if (layer.spec.kind == LayerKind::kDense) {
      if (dense_order.empty()) {
        dense_order.resize(in.size());
        std::iota(dense_order.begin(), dense_order.end(), 0);
        std::stable_sort(dense_order.begin(), dense_order.end(),
                         [&](std::size_t a, std::size_t b) { return in[a] < in[b]; });
      }
      const double* w = layer.weights.data().data() + o * in.size();
      ev.reserve(in.size());
      for (std::size_t j : dense_order) {
        if (std::isfinite(in[j])) ev.push_back({in[j], w[j]});
      }
      return ev;
    }
    for_each_input(layer, o, in, t_a, [&](double t, double w) {
      if (std::isfinite(t)) ev.push_back({t, w});
    });
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    return ev;
  }

  // Spike time of neuron o plus the neuron updates it cost.
  double spike(std::size_t o, std::uint64_t& ops) {
    const double theta = snn.schedule.threshold;
    double slope = 0.0;
    double v_a = 0.0;
    double latest = -kNoSpike;
    std::uint64_t inputs = 0;
    for_each_input(layer, o, in, t_a, [&](double t, double w) {
      if (!std::isfinite(t)) return;
      slope += w;
      v_a += w * (t_a - t);
      latest = std::max(latest, t);
      ++inputs;
    });
    const bool discrete = cfg.backend == Backend::kDiscrete;
    if (dynamic && latest <= t_a) {
      // Every input has arrived when the window opens: V is linear inside it.
      if (!discrete) {
        ops += inputs;
        if (v_a >= theta) return t_a;
        if (slope > 0.0) {
          const double t = t_a + (theta - v_a) / slope;
          if (t < t_b) return t;
        }
        return t_b;
      }
      ops += static_cast<std::uint64_t>(k_hi - k_lo);
      const long k = first_grid_crossing(grid, k_lo, k_hi, v_a, slope, t_a, theta);
      return k >= 0 ? grid.time(k) : t_b;
    }
    const std::vector<Event> ev = gather_sorted(o);
    if (!discrete) {
      ops += inputs;
      return exact_sorted(ev, theta, dynamic ? t_a : 0.0, t_b, dynamic);
    }
    const long k = discrete_sorted(ev, theta, k_lo, k_hi, grid);
    if (dynamic) {
      ops += static_cast<std::uint64_t>(k_hi - k_lo);
      return k >= 0 ? grid.time(k) : t_b;
    }
    ops += static_cast<std::uint64_t>(k >= 0 ? k : k_hi);
    return k >= 0 ? grid.time(k) : kNoSpike;
  }

  void record_trace(std::size_t o, double spike_time, MembraneTrace& tr) {
    std::vector<double> ts;
    std::vector<double> ws;
    for_each_input(layer, o, in, t_a, [&](double t, double w) {
      ts.push_back(t);
      ws.push_back(w);
    });
    std::vector<double> sample_times;
    const double stop = std::isfinite(spike_time) ? spike_time : t_b;
    if (cfg.backend == Backend::kDiscrete) {
      for (long k = k_lo; k <= k_hi && grid.time(k) <= stop; ++k) {
        sample_times.push_back(grid.time(k));
      }
    } else {
      sample_times.push_back(dynamic ? t_a : 0.0);
      std::vector<double> sorted = ts;
      std::sort(sorted.begin(), sorted.end());
      for (double t : sorted) {
        if (std::isfinite(t) && t > sample_times.front() && t < stop) sample_times.push_back(t);
      }
      sample_times.erase(std::unique(sample_times.begin(), sample_times.end()),
                         sample_times.end());
      if (stop > sample_times.back()) sample_times.push_back(stop);
    }
    std::vector<double> values;
    values.reserve(sample_times.size());
    for (double t : sample_times) values.push_back(membrane_potential(ts, ws, t));
    tr.times[o] = std::move(sample_times);
    tr.values[o] = std::move(values);
  }
};

void check_input_frame(const SpikingNetwork& snn, std::size_t layer, const SpikeFrame& input) {
  if (layer >= snn.layers.size()) {
    throw SequencingError("spiking layer " + std::to_string(layer) + " does not exist");
  }
  const SpikingLayer& L = snn.layers[layer];
  if (input.layer + 1 != L.frame) {
    throw SequencingError("spiking layer " + std::to_string(layer) + " expects frame " +
                          std::to_string(L.frame - 1) + ", got frame " +
                          std::to_string(input.layer));
  }
  if (input.times.size() != L.spec.in.size()) {
    throw ShapeError("frame has " + std::to_string(input.times.size()) + " spikes, layer expects " +
                     std::to_string(L.spec.in.size()));
  }
}

std::uint64_t deliveries(const SpikingLayer& L, std::span<const double> in) {
  std::uint64_t n = 0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    if (std::isfinite(in[j])) n += L.fan_out[j];
  }
  return n;
}

}  // namespace

SpikeFrame simulate_layer(const SpikingNetwork& snn, std::size_t layer, const SpikeFrame& input,
                          const SimConfig& cfg, OpCounters* counters, MembraneTrace* trace) {
  cfg.validate();
  check_input_frame(snn, layer, input);
  const SpikingLayer& L = snn.layers[layer];
  if (L.output) {
    throw SequencingError("the output layer does not spike; use readout_membrane");
  }
  LayerRun run(snn, L, input.times, cfg);
  const std::size_t n = L.spec.out.size();
  SpikeFrame out;
  out.layer = L.frame;
  out.times.resize(n);
  std::uint64_t ops = 0;
  if (trace) {
    trace->times.assign(n, {});
    trace->values.assign(n, {});
  }
  for (std::size_t o = 0; o < n; ++o) {
    out.times[o] = run.spike(o, ops);
    if (trace) run.record_trace(o, out.times[o], *trace);
  }
  if (counters) {
    counters->syn_ops += deliveries(L, input.times);
    counters->neuron_ops += ops;
  }
  return out;
}

SpikeFrame simulate_discrete(const SpikingNetwork& snn, std::size_t layer,
                             const SpikeFrame& input, SimConfig cfg, OpCounters* counters,
                             MembraneTrace* trace) {
  cfg.backend = Backend::kDiscrete;
  return simulate_layer(snn, layer, input, cfg, counters, trace);
}

SpikeFrame simulate_exact(const SpikingNetwork& snn, std::size_t layer, const SpikeFrame& input,
                          SimConfig cfg, OpCounters* counters, MembraneTrace* trace) {
  cfg.backend = Backend::kExact;
  return simulate_layer(snn, layer, input, cfg, counters, trace);
}

std::vector<double> readout_membrane(const SpikingNetwork& snn, const SpikeFrame& input,
                                     const SimConfig& cfg, OpCounters* counters) {
  cfg.validate();
  const std::size_t layer = snn.layers.size() - 1;
  check_input_frame(snn, layer, input);
  const SpikingLayer& L = snn.layers[layer];
  const double readout = snn.schedule.readout_time();
  const std::size_t n = L.spec.out.size();
  std::vector<double> v(n, 0.0);
  std::uint64_t ops = 0;
  const auto S = static_cast<std::uint64_t>(cfg.steps_per_window);
  for (std::size_t o = 0; o < n; ++o) {
    std::uint64_t inputs = 0;
    double acc = 0.0;
    for_each_input(L, o, input.times, readout, [&](double t, double w) {
      if (!(t <= readout)) return;
      acc += w * (readout - t);
      ++inputs;
    });
    v[o] = acc;
    if (cfg.backend == Backend::kExact) {
      ops += inputs;
    } else {
      ops += cfg.threshold == ThresholdMode::kDynamic ? S : S * snn.schedule.frames();
    }
  }
  if (counters) {
    counters->syn_ops += deliveries(L, input.times);
    counters->neuron_ops += ops;
  }
  return v;
}

NetworkRun run_network(const SpikingNetwork& snn, std::span<const double> input,
                       const SimConfig& cfg) {
  if (input.size() != snn.input_size()) {
    throw ShapeError("spiking network expects " + std::to_string(snn.input_size()) +
                     " inputs, got " + std::to_string(input.size()));
  }
  NetworkRun run;
  run.frames.push_back(encode_input(input));
  for (std::size_t l = 0; l + 1 < snn.layers.size(); ++l) {
    run.frames.push_back(simulate_layer(snn, l, run.frames.back(), cfg, &run.counters));
  }
  run.output = readout_membrane(snn, run.frames.back(), cfg, &run.counters);
  return run;
}

std::vector<std::vector<double>> decode_run(const SpikingNetwork& snn, const NetworkRun& run) {
  std::vector<std::vector<double>> out;
  for (std::size_t f = 1; f < run.frames.size(); ++f) {
    out.push_back(decode_spikes(run.frames[f], f, snn.schedule.window_length));
  }
  return out;
}

}  // namespace ttfs
