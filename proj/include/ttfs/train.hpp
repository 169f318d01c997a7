#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ttfs/losses.hpp"
#include "ttfs/network.hpp"

namespace ttfs {

struct TrainConfig {
  double lambda_w = 0.1;
  double lambda_a = 0.01;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 20;
  std::vector<double> milestones{0.6, 0.8, 0.9};  // fractions of `epochs`
  double decay_factor = 10.0;
  std::uint64_t seed = 1;
  std::size_t batch_size = 64;
  TaskLoss task_loss = TaskLoss::kCrossEntropy;
  // Constraint toggles (ablation switches).
  bool soft_constraint = true;   // lambda_w * L_W term
  bool hard_constraint = true;   // projection after every step
  bool preact_norm = true;       // lambda_a * L_A term

  void validate() const;
  /// Learning rate in effect during `epoch` (0-based): divided by
  /// decay_factor once for every milestone already reached.
  double learning_rate_at(int epoch) const;
  /// First epoch (0-based) of each decayed stage.
  std::vector<int> milestone_epochs() const;
};

/// Shifts every weight of each constrained neuron by the same amount so that
/// its weight sum becomes exactly 1: w_ij <- w_ij - (sum_j w_ij - 1) / N.
/// This is the Euclidean projection onto the hyperplane sum_j w_ij = 1.
/// Rows already feasible to rounding accuracy are left untouched, which makes
/// the projection idempotent bit for bit.
void project_row(std::span<double> row);
void project_weight_sums_inplace(Network& net);
Network project_weight_sums(Network net);

/// Momentum SGD with decoupled weight-decay term folded into the gradient
/// (v <- mu v + g + wd w; w <- w - lr v), followed by the hard projection
/// when enabled.
class SgdOptimizer {
 public:
  SgdOptimizer(const Network& net, TrainConfig cfg);
  void step(Network& net, const std::vector<Tensor>& grads, int epoch);
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  std::vector<Tensor> velocity_;
};

/// Images as rows of [N x D] with values in [0,1]; labels may be empty for
/// reconstruction tasks.
struct LabeledData {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
  LabeledData slice(std::size_t begin, std::size_t end) const;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double task_loss = 0.0;
  double weight_sum_loss = 0.0;
  double preact_loss = 0.0;
  double total_loss = 0.0;
  double validation_metric = 0.0;  // accuracy, or MSE for reconstruction
  double max_step_deviation = 0.0;  // worst |sum w - 1| seen after any step this epoch
  double preact_abs_mean = 0.0;     // batch-average |mean(z)| over hidden layers
  double preact_std_gap = 0.0;      // batch-average |std(z) - 1/3| over hidden layers
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double max_step_deviation = 0.0;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains `net` in place. Deterministic for a fixed seed: batch order and
/// dropout masks derive from cfg.seed only, reductions run single-threaded.
TrainResult train(Network& net, const LabeledData& train_set, const LabeledData* validation,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Argmax class per row.
std::vector<int> predict_classes(const Tensor& logits);
double classification_accuracy(const Network& net, const LabeledData& data,
                               std::size_t batch = 500);
/// Mean squared error between sigmoid(output) and the input image.
double reconstruction_mse(const Network& net, const LabeledData& data, std::size_t batch = 500);

}  // namespace ttfs
