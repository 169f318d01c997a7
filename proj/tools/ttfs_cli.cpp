// ttfs: train, convert, simulate and evaluate TTFS spiking networks.
#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "ttfs/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string preset;
  std::uint64_t seed = 0;
  int steps = 0;
  int epochs = -1;
  std::string backend;
  std::string threshold;
  std::string data_dir;
  std::string output_dir;
  std::string split;
  std::size_t train_limit = 0;
  std::size_t eval_limit = 0;
  double neuron_op_weight = -1.0;
  bool force = false;
  bool no_soft = false, no_hard = false, no_relu1 = false, no_norm = false, no_dynamic = false;
};

ttfs::ExperimentConfig resolve(const Overrides& o, const CLI::App& app) {
  ttfs::ExperimentConfig cfg =
      o.config.empty() ? ttfs::ExperimentConfig{} : ttfs::load_experiment_config(o.config);
  if (!o.preset.empty()) {
    cfg.preset = o.preset;
    if (o.config.empty()) cfg.train = ttfs::preset_train_defaults(cfg.preset);
  }
  if (app.count("--seed")) cfg.train.seed = o.seed;
  if (app.count("--epochs")) cfg.train.epochs = o.epochs;
  if (o.no_soft) cfg.flags.soft = false;
  if (o.no_hard) cfg.flags.hard = false;
  if (o.no_relu1) cfg.flags.relu1 = false;
  if (o.no_norm) cfg.flags.norm = false;
  if (o.no_dynamic) cfg.flags.dynamic = false;
  cfg.apply_flags();
  if (app.count("--steps-per-window")) cfg.sim.steps_per_window = o.steps;
  if (!o.backend.empty()) cfg.sim.backend = ttfs::parse_backend(o.backend);
  if (!o.threshold.empty()) cfg.sim.threshold = ttfs::parse_threshold_mode(o.threshold);
  if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (!o.split.empty()) cfg.split = o.split;
  if (app.count("--train-limit")) cfg.train_limit = o.train_limit;
  if (app.count("--limit")) cfg.eval_limit = o.eval_limit;
  if (o.neuron_op_weight >= 0.0) cfg.neuron_op_weight = o.neuron_op_weight;
  if (o.force) cfg.force = true;
  cfg.validate();
  return cfg;
}

void print_report(const ttfs::RunReport& r) {
  if (r.task == "classification") {
    std::cout << "ann accuracy   " << r.ann_accuracy << "\n"
              << "snn accuracy   " << r.snn_accuracy << "\n"
              << "delta          " << r.accuracy_delta() << "\n"
              << "argmax agree   " << r.argmax_agreement << "\n";
  } else {
    std::cout << "psnr ann/snn   " << r.ann_psnr << " / " << r.snn_psnr << "\n"
              << "ssim ann/snn   " << r.ann_ssim << " / " << r.snn_ssim << "\n";
  }
  for (std::size_t l = 0; l < r.conversion_error.size(); ++l) {
    std::cout << "layer " << l + 1 << " error  mean " << r.conversion_error[l].mean << " max "
              << r.conversion_error[l].max << "\n";
  }
  std::cout << "syn ops        " << r.counters.syn_ops << "\n"
            << "neuron ops     " << r.counters.neuron_ops << "\n"
            << "power proxy    " << r.power_proxy << "\n"
            << "out of window  " << r.out_of_window_fraction << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lossless ANN to time-to-first-spike SNN conversion"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--preset", o.preset, "Network preset");
  app.add_option("--seed", o.seed, "Training seed");
  app.add_option("--epochs", o.epochs, "Training epochs");
  app.add_option("--steps-per-window", o.steps, "Discrete steps per time window");
  app.add_option("--backend", o.backend, "discrete or exact")
      ->check(CLI::IsMember({"discrete", "exact"}));
  app.add_option("--threshold", o.threshold, "dynamic or fixed")
      ->check(CLI::IsMember({"dynamic", "fixed"}));
  app.add_option("--data-dir", o.data_dir, "Directory with the MNIST IDX files");
  app.add_option("--output-dir", o.output_dir, "Output directory (TTFS_OUTPUT_DIR wins)");
  app.add_option("--split", o.split, "train, validation or test");
  app.add_option("--train-limit", o.train_limit, "Use only the first N training images");
  app.add_option("--limit", o.eval_limit, "Use only the first N evaluation images");
  app.add_option("--neuron-op-weight", o.neuron_op_weight, "Weight of one neuron update");
  app.add_flag("--force", o.force, "Convert even when the audit fails");
  app.add_flag("--no-soft", o.no_soft, "Disable the weight-sum loss");
  app.add_flag("--no-hard", o.no_hard, "Disable the weight-sum projection");
  app.add_flag("--no-relu1", o.no_relu1, "Use ReLU instead of ReLU1");
  app.add_flag("--no-norm", o.no_norm, "Disable pre-activation normalisation");
  app.add_flag("--no-dynamic", o.no_dynamic, "Use a fixed firing threshold");

  auto* train = app.add_subcommand("train", "Train an ANN under the conversion constraints");
  std::string model, artifact, report, csv;
  std::size_t sample = 0;
  auto* convert = app.add_subcommand("convert", "Convert a trained model to a spiking network");
  convert->add_option("model", model, "Model container")->required()->check(CLI::ExistingFile);
  auto* simulate = app.add_subcommand("simulate", "Simulate one sample and dump its spike trace");
  simulate->add_option("artifact", artifact, "Spiking artifact")->required();
  simulate->add_option("--sample", sample, "Sample index in the split");
  auto* evaluate = app.add_subcommand("evaluate", "Paired ANN/SNN evaluation");
  evaluate->add_option("artifact", artifact, "Spiking artifact")->required();
  auto* ablate = app.add_subcommand("ablate", "Run every ablation row");
  auto* proxy = app.add_subcommand("power-proxy", "Power proxy of a saved run report");
  proxy->add_option("report", report, "Run report (JSON)")->required()->check(CLI::ExistingFile);
  auto* hist = app.add_subcommand("export-hist", "Write the spike histogram of a run report");
  hist->add_option("report", report, "Run report (JSON)")->required()->check(CLI::ExistingFile);
  hist->add_option("--out", csv, "CSV path (default: next to the report)");

  CLI11_PARSE(app, argc, argv);

  auto progress = [](const std::string& msg) { std::cerr << msg << std::endl; };
  try {
    const ttfs::ExperimentConfig cfg = resolve(o, app);
    if (train->parsed()) {
      const ttfs::TrainRun tr = ttfs::cmd_train(cfg, progress);
      std::cout << "model        " << tr.container.string() << "\n"
                << "row          " << cfg.flags.row_label() << "\n"
                << "convertible  " << (tr.audit.pass() ? "yes" : "no") << "\n"
                << "max |sum-1|  " << tr.audit.max_deviation() << "\n";
    } else if (convert->parsed()) {
      const ttfs::ConvertRun cr = ttfs::cmd_convert(model, cfg);
      if (cr.snn.report.forced) {
        std::cerr << "warning: conversion forced despite a failing audit\n";
      }
      std::cout << "artifact  " << cr.artifact.string() << "\n"
                << "report    " << cr.report.string() << "\n";
    } else if (simulate->parsed()) {
      const ttfs::SimulateRun s = ttfs::cmd_simulate(artifact, sample, cfg);
      std::cout << "output";
      for (double v : s.run.output) std::cout << ' ' << v;
      std::cout << "\ntrace  " << s.trace.string() << "\n";
    } else if (evaluate->parsed()) {
      print_report(ttfs::cmd_evaluate(artifact, cfg));
    } else if (ablate->parsed()) {
      std::cout << ttfs::ablation_table(ttfs::cmd_ablate(cfg, std::nullopt, progress));
    } else if (proxy->parsed()) {
      std::cout << ttfs::cmd_power_proxy(report, cfg.neuron_op_weight) << "\n";
    } else if (hist->parsed()) {
      const std::filesystem::path out =
          csv.empty() ? std::filesystem::path(report).replace_filename("histogram.csv")
                      : std::filesystem::path(csv);
      ttfs::cmd_export_hist(report, out);
      std::cout << out.string() << "\n";
    }
  } catch (const ttfs::ConversionRefused& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const ttfs::DatasetError& e) {
    std::cerr << "dataset: " << e.what() << "\n";
    return 4;
  } catch (const ttfs::DivergenceError& e) {
    std::cerr << e.what() << " (epoch " << e.epoch() << ")\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
