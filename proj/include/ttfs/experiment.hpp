#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttfs/io.hpp"
#include "ttfs/metrics.hpp"
#include "ttfs/simulate.hpp"
#include "ttfs/train.hpp"

namespace ttfs {

/// mlp-784-300-10, ae-784-128-64-32-64-128-784, cnn-small.
std::vector<std::string> preset_names();
Network build_preset(const std::string& name, Activation hidden = Activation::kRelu1);
TaskLoss preset_task(const std::string& name);
/// Training defaults for a preset: its task loss, and a smaller learning
/// rate for the autoencoder.
TrainConfig preset_train_defaults(const std::string& name);
/// Dense-layer initialisation gain for init_weights (0 keeps N(0, 1e-4)).
double preset_init_gain(const std::string& name);

/// The five switches of the ablation table.
struct AblationFlags {
  bool soft = true;
  bool hard = true;
  bool relu1 = true;
  bool norm = true;
  bool dynamic = true;

  /// "baseline", "1", "2a", "2b", "3", "4", "5" or "custom".
  std::string row_label() const;
  static AblationFlags for_row(const std::string& label);
  bool operator==(const AblationFlags&) const = default;
};

std::vector<std::string> ablation_rows();

struct ExperimentConfig {
  std::string preset = "mlp-784-300-10";
  TrainConfig train;
  SimConfig sim;
  AblationFlags flags;
  std::filesystem::path data_dir;
  std::filesystem::path output_dir = "runs";
  std::string split = "test";
  std::size_t train_limit = 0;  // 0 = whole split
  std::size_t eval_limit = 0;
  std::size_t bins_per_window = 10;
  double neuron_op_weight = 1.0;
  bool force = false;

  /// Copies the flags into the training and simulation settings and the
  /// preset's task loss into the training config.
  void apply_flags();
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// TTFS_OUTPUT_DIR when set, otherwise cfg.output_dir.
std::filesystem::path output_directory(const ExperimentConfig& cfg);

struct EvalOptions {
  std::size_t bins_per_window = 10;
  double neuron_op_weight = 1.0;
  std::string split = "test";
};

/// Paired ANN/SNN inference over `data`.
RunReport evaluate_pair(const Network& net, const SpikingNetwork& snn, const LabeledData& data,
                        const SimConfig& sim, const EvalOptions& opts = {});

using Progress = std::function<void(const std::string&)>;

struct TrainRun {
  Network net;
  TrainResult result;
  ConvertReport audit;
  std::filesystem::path container;
};

TrainRun cmd_train(const ExperimentConfig& cfg, const Progress& progress = {});

struct ConvertRun {
  SpikingNetwork snn;
  std::filesystem::path artifact;
  std::filesystem::path report;
};

/// Writes the spiking artifact and convert_report.json. A refused
/// conversion still writes the report before rethrowing.
ConvertRun cmd_convert(const std::filesystem::path& model, const ExperimentConfig& cfg);

RunReport cmd_evaluate(const std::filesystem::path& artifact, const ExperimentConfig& cfg);

struct SimulateRun {
  NetworkRun run;
  std::filesystem::path trace;
};

SimulateRun cmd_simulate(const std::filesystem::path& artifact, std::size_t sample,
                         const ExperimentConfig& cfg);

struct AblationRow {
  std::string label;
  AblationFlags flags;
  double ann_accuracy = 0.0;
  double snn_accuracy = 0.0;
  bool convertible = false;
  double max_deviation = 0.0;
  double out_of_window_fraction = 0.0;

  double delta() const { return ann_accuracy - snn_accuracy; }
};

/// Trains and evaluates every ablation row. Row 5 reuses the baseline
/// network; `baseline`, when given, is used instead of training one.
std::vector<AblationRow> cmd_ablate(const ExperimentConfig& cfg,
                                    const std::optional<Network>& baseline = std::nullopt,
                                    const Progress& progress = {});
std::string ablation_table(const std::vector<AblationRow>& rows);

double cmd_power_proxy(const std::filesystem::path& report, double neuron_op_weight);
void cmd_export_hist(const std::filesystem::path& report, const std::filesystem::path& csv);

}  // namespace ttfs
