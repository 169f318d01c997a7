#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ttfs/network.hpp"

namespace ttfs {

enum class TaskLoss { kCrossEntropy, kMeanSquared };

std::string to_string(TaskLoss loss);
TaskLoss parse_task_loss(const std::string& s);

/// Loss value plus its gradient with respect to the network output
/// (final pre-activation).
struct LossValue {
  double value = 0.0;
  Tensor grad;
};

/// Softmax cross-entropy on raw logits [B x C], averaged over the batch.
LossValue cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean squared error between sigmoid(logits) and targets, averaged over all
/// elements. This is the reconstruction head: outputs are squashed by the
/// logistic function before comparison.
LossValue logistic_mse(const Tensor& logits, const Tensor& targets);

/// Squared error between sigmoid(logits) and targets summed over each
/// sample's outputs, averaged over the batch. Equals logistic_mse times the
/// output width; training uses it so the reconstruction gradient does not
/// shrink with the image size.
LossValue logistic_sse(const Tensor& logits, const Tensor& targets);

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Compensated sum of one weight row.
double row_sum(std::span<const double> row);

/// Rounding-level bound on |row_sum - 1| below which a row counts as exactly
/// feasible: 2 eps (sum_j |w_j| + 1).
double row_feasibility_tolerance(std::span<const double> row);

/// Per-neuron weight sums of a parameterised layer (one per constrained row).
std::vector<double> neuron_weight_sums(const LayerSpec& spec, const Tensor& weights);

/// Largest |sum_j w_ij - 1| over the constrained rows of one layer.
double max_weight_sum_deviation(const LayerSpec& spec, const Tensor& weights);
/// Largest deviation over the whole network (0 when nothing is constrained).
double max_weight_sum_deviation(const Network& net);

/// Sum over constrained neurons of |sum_j w_ij - 1|.
double loss_weight_sum(const Network& net);

/// Subgradient of loss_weight_sum scaled by `lambda`, added into `grads`.
/// Rows whose sum is feasible to rounding accuracy contribute zero.
void add_weight_sum_grad(const Network& net, double lambda, std::vector<Tensor>& grads);

/// Per-layer targets for pre-activation normalisation. Layers without a
/// target hold an empty tensor.
struct PreActTarget {
  std::vector<Tensor> per_layer;
};

/// Standardises one layer's batch of pre-activations to mean 0 and standard
/// deviation 1/3: A = (z - mean(z)) / (3 std(z)), statistics taken over the
/// whole [batch x neurons] block.
Tensor standardized_target(const Tensor& pre);

/// Targets for every hidden synaptic layer with an activation.
PreActTarget make_preact_targets(const Network& net, const ForwardTrace& trace);

/// Sum over layers and neurons of |z - A|, averaged over the batch rows.
double loss_preact_norm(const std::vector<Tensor>& pre, const PreActTarget& targets);

/// d loss_preact_norm / dz with the targets held fixed, scaled by `lambda`.
std::vector<Tensor> preact_norm_grads(const std::vector<Tensor>& pre, const PreActTarget& targets,
                                      double lambda);

struct LossWeights {
  double lambda_w = 0.1;
  double lambda_a = 0.01;
};

/// L = L_task + lambda_w * L_W + lambda_a * L_A.
double total_loss(double task_loss, double weight_sum_loss, double preact_loss,
                  const LossWeights& weights);

}  // namespace ttfs
