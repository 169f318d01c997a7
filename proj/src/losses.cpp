#include "ttfs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ttfs {

std::string to_string(TaskLoss loss) {
  return loss == TaskLoss::kCrossEntropy ? "cross-entropy" : "mse";
}

TaskLoss parse_task_loss(const std::string& s) {
  if (s == "cross-entropy" || s == "ce") return TaskLoss::kCrossEntropy;
  if (s == "mse" || s == "mean-squared-error") return TaskLoss::kMeanSquared;
  throw ConfigError("unknown task loss '" + s + "'");
}

LossValue cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross-entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  LossValue out{0.0, Tensor(logits.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto z = logits.row(b);
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DomainError("label " + std::to_string(label) + " outside [0," +
                        std::to_string(classes) + ")");
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double log_denom = std::log(denom);
    out.value += (log_denom - (z[label] - zmax)) * inv_batch;
    auto g = out.grad.row(b);
    for (std::size_t c = 0; c < classes; ++c) {
      g[c] = std::exp(z[c] - zmax - log_denom) * inv_batch;
    }
    g[label] -= inv_batch;
  }
  return out;
}

LossValue logistic_mse(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("mse: outputs " + shape_string(logits.shape()) + " vs targets " +
                     shape_string(targets.shape()));
  }
  LossValue out{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double y = logistic(logits[i]);
    const double d = y - targets[i];
    out.value += d * d * inv_n;
    out.grad[i] = 2.0 * d * y * (1.0 - y) * inv_n;
  }
  return out;
}

LossValue logistic_sse(const Tensor& logits, const Tensor& targets) {
  LossValue out = logistic_mse(logits, targets);
  const double width = static_cast<double>(logits.size() / logits.shape().front());
  out.value *= width;
  for (double& g : out.grad.data()) g *= width;
  return out;
}

double row_sum(std::span<const double> row) {
  // Neumaier summation.
  double sum = 0.0;
  double comp = 0.0;
  for (double v : row) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

double row_feasibility_tolerance(std::span<const double> row) {
  double abs_sum = 0.0;
  for (double v : row) abs_sum += std::abs(v);
  return 2.0 * std::numeric_limits<double>::epsilon() * (abs_sum + 1.0);
}

namespace {

template <typename Fn>
void for_each_row(const LayerSpec& spec, const Tensor& w, Fn&& fn) {
  const std::size_t rows = spec.constrained_rows();
  const std::size_t width = rows ? w.size() / rows : 0;
  for (std::size_t r = 0; r < rows; ++r) fn(r, w.data().subspan(r * width, width));
}

}  // namespace

std::vector<double> neuron_weight_sums(const LayerSpec& spec, const Tensor& weights) {
  std::vector<double> sums;
  for_each_row(spec, weights, [&](std::size_t, std::span<const double> row) {
    sums.push_back(row_sum(row));
  });
  return sums;
}

double max_weight_sum_deviation(const LayerSpec& spec, const Tensor& weights) {
  double worst = 0.0;
  for_each_row(spec, weights, [&](std::size_t, std::span<const double> row) {
    worst = std::max(worst, std::abs(row_sum(row) - 1.0));
  });
  return worst;
}

double max_weight_sum_deviation(const Network& net) {
  double worst = 0.0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.constrained(i)) {
      worst = std::max(worst, max_weight_sum_deviation(net.layers[i], net.weights[i]));
    }
  }
  return worst;
}

double loss_weight_sum(const Network& net) {
  double total = 0.0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.constrained(i)) continue;
    for_each_row(net.layers[i], net.weights[i], [&](std::size_t, std::span<const double> row) {
      total += std::abs(row_sum(row) - 1.0);
    });
  }
  return total;
}

void add_weight_sum_grad(const Network& net, double lambda, std::vector<Tensor>& grads) {
  if (lambda == 0.0) return;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    if (!net.constrained(i)) continue;
    Tensor& g = grads.at(i);
    if (g.shape() != net.weights[i].shape()) {
      throw ShapeError("weight-sum gradient slot " + std::to_string(i) + " has shape " +
                       shape_string(g.shape()));
    }
    const std::size_t rows = spec.constrained_rows();
    const std::size_t width = net.weights[i].size() / rows;
    for_each_row(spec, net.weights[i], [&](std::size_t r, std::span<const double> row) {
      const double dev = row_sum(row) - 1.0;
      if (std::abs(dev) <= row_feasibility_tolerance(row)) return;
      const double step = dev > 0.0 ? lambda : -lambda;
      for (std::size_t j = 0; j < width; ++j) g[r * width + j] += step;
    });
  }
}

Tensor standardized_target(const Tensor& pre) {
  const double n = static_cast<double>(pre.size());
  double mean = 0.0;
  for (double v : pre.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : pre.data()) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / n);
  Tensor target(pre.shape());
  if (stddev < 1e-12) return target;  // degenerate batch: all values collapse to 0
  const double scale = 1.0 / (3.0 * stddev);
  for (std::size_t i = 0; i < pre.size(); ++i) target[i] = (pre[i] - mean) * scale;
  return target;
}

PreActTarget make_preact_targets(const Network& net, const ForwardTrace& trace) {
  PreActTarget t;
  t.per_layer.resize(net.layers.size());
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (l.is_synaptic() && l.has_activation()) t.per_layer[i] = standardized_target(trace.pre.at(i));
  }
  return t;
}

double loss_preact_norm(const std::vector<Tensor>& pre, const PreActTarget& targets) {
  if (pre.size() != targets.per_layer.size()) {
    throw ShapeError("pre-activation normalisation: " + std::to_string(pre.size()) +
                     " layers vs " + std::to_string(targets.per_layer.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < pre.size(); ++l) {
    const Tensor& a = targets.per_layer[l];
    if (a.empty()) continue;
    const Tensor& z = pre[l];
    if (z.shape() != a.shape()) {
      throw ShapeError("layer " + std::to_string(l) + " pre-activation " +
                       shape_string(z.shape()) + " vs target " + shape_string(a.shape()));
    }
    const double rows = z.rank() == 2 ? static_cast<double>(z.dim(0)) : 1.0;
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += std::abs(z[k] - a[k]);
    total += s / rows;
  }
  return total;
}

std::vector<Tensor> preact_norm_grads(const std::vector<Tensor>& pre, const PreActTarget& targets,
                                      double lambda) {
  std::vector<Tensor> grads(pre.size());
  for (std::size_t l = 0; l < pre.size(); ++l) {
    const Tensor& a = targets.per_layer.at(l);
    if (a.empty()) continue;
    const Tensor& z = pre[l];
    const double rows = z.rank() == 2 ? static_cast<double>(z.dim(0)) : 1.0;
    const double step = lambda / rows;
    Tensor g(z.shape());
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double d = z[k] - a[k];
      g[k] = d > 0.0 ? step : (d < 0.0 ? -step : 0.0);
    }
    grads[l] = std::move(g);
  }
  return grads;
}

double total_loss(double task_loss, double weight_sum_loss, double preact_loss,
                  const LossWeights& weights) {
  if (weights.lambda_w < 0.0 || weights.lambda_a < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  return task_loss + weights.lambda_w * weight_sum_loss + weights.lambda_a * preact_loss;
}

}  // namespace ttfs
