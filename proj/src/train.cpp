#include "ttfs/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ttfs {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (lambda_w < 0.0 || lambda_a < 0.0) throw ConfigError("loss weights must be nonnegative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("decay factor must be positive");
  double prev = 0.0;
  for (double m : milestones) {
    if (!(m > prev && m < 1.0)) {
      throw ConfigError("milestones must be strictly increasing inside (0,1)");
    }
    prev = m;
  }
}

std::vector<int> TrainConfig::milestone_epochs() const {
  std::vector<int> out;
  for (double m : milestones) out.push_back(std::max(1, static_cast<int>(std::floor(m * epochs))));
  return out;
}

double TrainConfig::learning_rate_at(int epoch) const {
  double lr = learning_rate;
  for (int m : milestone_epochs()) {
    if (epoch >= m) lr /= decay_factor;
  }
  return lr;
}

void project_row(std::span<double> row) {
  const double n = static_cast<double>(row.size());
  // A second pass only triggers when the first shift itself rounded badly
  // (huge deviations); in practice one pass lands within tolerance.
  for (int pass = 0; pass < 3; ++pass) {
    const double dev = row_sum(row) - 1.0;
    if (std::abs(dev) <= row_feasibility_tolerance(row)) return;
    const double shift = dev / n;
    for (double& w : row) w -= shift;
  }
}

void project_weight_sums_inplace(Network& net) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!net.constrained(i)) continue;
    const std::size_t rows = l.constrained_rows();
    const std::size_t width = net.weights[i].size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      project_row(net.weights[i].data().subspan(r * width, width));
    }
  }
}

Network project_weight_sums(Network net) {
  project_weight_sums_inplace(net);
  return net;
}

SgdOptimizer::SgdOptimizer(const Network& net, TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    velocity_.push_back(net.layers[i].has_params() ? Tensor(net.weights[i].shape()) : Tensor());
  }
}

void SgdOptimizer::step(Network& net, const std::vector<Tensor>& grads, int epoch) {
  if (grads.size() != net.layers.size()) {
    throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(net.layers.size()) + " layers");
  }
  const double lr = cfg_.learning_rate_at(epoch);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].has_params()) continue;
    Tensor& w = net.weights[i];
    const Tensor& g = grads[i];
    if (g.shape() != w.shape()) {
      throw ShapeError("gradient " + shape_string(g.shape()) + " does not match weights " +
                       shape_string(w.shape()) + " of layer " + std::to_string(i));
    }
    Tensor& v = velocity_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = cfg_.momentum * v[k] + g[k] + cfg_.weight_decay * w[k];
      w[k] -= lr * v[k];
    }
  }
  if (cfg_.hard_constraint) project_weight_sums_inplace(net);
}

LabeledData LabeledData::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw ShapeError("bad dataset slice");
  const std::size_t d = images.dim(1);
  std::vector<double> data(images.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                           images.data().begin() + static_cast<std::ptrdiff_t>(end * d));
  LabeledData out{Tensor({end - begin, d}, std::move(data)), {}};
  if (!labels.empty()) {
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

namespace {

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> idx) {
  const std::size_t d = src.dim(1);
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(src.row(idx[r]).begin(), d, out.row(r).begin());
  }
  return out;
}

struct MomentStats {
  double abs_mean = 0.0;
  double std_gap = 0.0;
};

MomentStats hidden_preact_stats(const Network& net, const ForwardTrace& tr) {
  MomentStats s;
  int layers = 0;
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    if (!(net.layers[i].is_synaptic() && net.layers[i].has_activation())) continue;
    const Tensor& z = tr.pre[i];
    const double n = static_cast<double>(z.size());
    double mean = 0.0;
    for (double v : z.data()) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : z.data()) var += (v - mean) * (v - mean);
    s.abs_mean += std::abs(mean);
    s.std_gap += std::abs(std::sqrt(var / n) - 1.0 / 3.0);
    ++layers;
  }
  if (layers) {
    s.abs_mean /= layers;
    s.std_gap /= layers;
  }
  return s;
}

}  // namespace

TrainResult train(Network& net, const LabeledData& train_set, const LabeledData* validation,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  net.validate();
  const bool classify = cfg.task_loss == TaskLoss::kCrossEntropy;
  if (classify && train_set.labels.size() != train_set.size()) {
    throw DatasetError("classification training needs one label per image");
  }
  if (train_set.size() == 0) throw DatasetError("empty training set");

  SgdOptimizer opt(net, cfg);
  std::mt19937_64 dropout_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(cfg.seed + 1000003ULL * static_cast<std::uint64_t>(epoch + 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch + 1;
    log.learning_rate = cfg.learning_rate_at(epoch);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Tensor x = gather_rows(train_set.images, idx);

      ForwardOptions fo;
      fo.training = true;
      fo.rng = &dropout_rng;
      fo.check_input_range = false;
      ForwardResult fwd = ann_forward(net, x, fo);

      LossValue task;
      if (classify) {
        std::vector<int> y(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) y[r] = train_set.labels[idx[r]];
        task = cross_entropy(fwd.output, y);
      } else {
        task = logistic_sse(fwd.output, x);
      }

      double la = 0.0;
      std::vector<Tensor> extra;
      if (cfg.preact_norm && cfg.lambda_a > 0.0) {
        const PreActTarget targets = make_preact_targets(net, fwd.trace);
        la = loss_preact_norm(fwd.trace.pre, targets);
        extra = preact_norm_grads(fwd.trace.pre, targets, cfg.lambda_a);
      }
      const double lw = loss_weight_sum(net);
      const double lambda_w = cfg.soft_constraint ? cfg.lambda_w : 0.0;
      const double lambda_a = cfg.preact_norm ? cfg.lambda_a : 0.0;
      const double total = total_loss(task.value, lw, la, {lambda_w, lambda_a});
      if (!std::isfinite(total)) {
        throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch + 1), epoch + 1);
      }

      std::vector<Tensor> grads = network_backward(net, fwd.trace, task.grad, extra);
      if (cfg.soft_constraint) add_weight_sum_grad(net, cfg.lambda_w, grads);
      opt.step(net, grads, epoch);
      ++result.steps;

      const double dev = max_weight_sum_deviation(net);
      log.max_step_deviation = std::max(log.max_step_deviation, dev);
      const MomentStats ms = hidden_preact_stats(net, fwd.trace);
      log.preact_abs_mean += ms.abs_mean;
      log.preact_std_gap += ms.std_gap;
      log.task_loss += task.value;
      log.weight_sum_loss += lw;
      log.preact_loss += la;
      log.total_loss += total;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    log.task_loss /= nb;
    log.weight_sum_loss /= nb;
    log.preact_loss /= nb;
    log.total_loss /= nb;
    log.preact_abs_mean /= nb;
    log.preact_std_gap /= nb;
    if (validation && validation->size() > 0) {
      log.validation_metric = classify ? classification_accuracy(net, *validation)
                                       : reconstruction_mse(net, *validation);
    }
    result.max_step_deviation = std::max(result.max_step_deviation, log.max_step_deviation);
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

std::vector<int> predict_classes(const Tensor& logits) {
  std::vector<int> out(logits.dim(0));
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double classification_accuracy(const Network& net, const LabeledData& data, std::size_t batch) {
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t stop = std::min(data.size(), start + batch);
    const auto pred = predict_classes(ann_forward(net, data.slice(start, stop).images).output);
    for (std::size_t r = 0; r < pred.size(); ++r) correct += pred[r] == data.labels[start + r];
  }
  return data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
}

double reconstruction_mse(const Network& net, const LabeledData& data, std::size_t batch) {
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t stop = std::min(data.size(), start + batch);
    const LabeledData part = data.slice(start, stop);
    const Tensor out = ann_forward(net, part.images).output;
    total += logistic_mse(out, part.images).value * static_cast<double>(stop - start);
  }
  return data.size() ? total / static_cast<double>(data.size()) : 0.0;
}

}  // namespace ttfs
