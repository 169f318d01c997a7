#include "ttfs/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ttfs {

namespace fs = std::filesystem;

std::vector<std::string> preset_names() {
  return {"mlp-784-300-10", "ae-784-128-64-32-64-128-784", "cnn-small"};
}

Network build_preset(const std::string& name, Activation hidden) {
  if (name == "mlp-784-300-10") {
    return make_network({LayerSpec::dense(784, 300, hidden),
                         LayerSpec::dropout_layer({1, 1, 300}, 0.1),
                         LayerSpec::dense(300, 10, Activation::kNone)});
  }
  if (name == "ae-784-128-64-32-64-128-784") {
    const std::size_t sizes[] = {784, 128, 64, 32, 64, 128, 784};
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i + 1 < std::size(sizes); ++i) {
      const bool last = i + 2 == std::size(sizes);
      layers.push_back(LayerSpec::dense(sizes[i], sizes[i + 1], last ? Activation::kNone : hidden));
    }
    return make_network(std::move(layers));
  }
  if (name == "cnn-small") {
    return make_network({LayerSpec::conv({28, 28, 1}, 8, 5, 1, 0, hidden),
                         LayerSpec::avgpool({24, 24, 8}, 2),
                         LayerSpec::conv({12, 12, 8}, 16, 5, 1, 0, hidden),
                         LayerSpec::avgpool({8, 8, 16}, 2),
                         LayerSpec::flatten({4, 4, 16}),
                         LayerSpec::dense(256, 10, Activation::kNone)});
  }
  throw ConfigError("unknown preset '" + name + "'");
}

TaskLoss preset_task(const std::string& name) {
  build_preset(name);
  return name.rfind("ae-", 0) == 0 ? TaskLoss::kMeanSquared : TaskLoss::kCrossEntropy;
}

TrainConfig preset_train_defaults(const std::string& name) {
  TrainConfig c;
  c.task_loss = preset_task(name);
  if (c.task_loss == TaskLoss::kMeanSquared) c.learning_rate = 0.01;
  return c;
}

double preset_init_gain(const std::string& name) {
  return preset_task(name) == TaskLoss::kMeanSquared ? 2.0 : 0.0;
}

std::string AblationFlags::row_label() const {
  for (const auto& row : ablation_rows()) {
    if (for_row(row) == *this) return row;
  }
  return "custom";
}

AblationFlags AblationFlags::for_row(const std::string& label) {
  AblationFlags f;
  if (label == "baseline") return f;
  if (label == "1") return {false, false, false, false, false};
  if (label == "2a") f.hard = false;
  else if (label == "2b") f.soft = f.hard = false;
  else if (label == "3") f.relu1 = false;
  else if (label == "4") f.norm = false;
  else if (label == "5") f.dynamic = false;
  else throw ConfigError("unknown ablation row '" + label + "'");
  return f;
}

std::vector<std::string> ablation_rows() { return {"baseline", "1", "2a", "2b", "3", "4", "5"}; }

void ExperimentConfig::apply_flags() {
  train.soft_constraint = flags.soft;
  train.hard_constraint = flags.hard;
  train.preact_norm = flags.norm;
  train.task_loss = preset_task(preset);
  sim.threshold = flags.dynamic ? ThresholdMode::kDynamic : ThresholdMode::kFixed;
}

void ExperimentConfig::validate() const {
  build_preset(preset);
  train.validate();
  sim.validate();
  parse_split(split);
  if (bins_per_window == 0) throw ConfigError("bins_per_window must be positive");
  if (neuron_op_weight < 0.0) throw ConfigError("neuron_op_weight must be nonnegative");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"preset", c.preset},
          {"train", to_json(c.train)},
          {"sim",
           {{"steps_per_window", c.sim.steps_per_window},
            {"backend", to_string(c.sim.backend)},
            {"threshold", to_string(c.sim.threshold)}}},
          {"flags",
           {{"soft", c.flags.soft},
            {"hard", c.flags.hard},
            {"relu1", c.flags.relu1},
            {"norm", c.flags.norm},
            {"dynamic", c.flags.dynamic}}},
          {"row", c.flags.row_label()},
          {"data_dir", c.data_dir.string()},
          {"output_dir", c.output_dir.string()},
          {"split", c.split},
          {"train_limit", c.train_limit},
          {"eval_limit", c.eval_limit},
          {"bins_per_window", c.bins_per_window},
          {"neuron_op_weight", c.neuron_op_weight},
          {"force", c.force}};
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.preset = j.value("preset", c.preset);
  c.train = preset_train_defaults(c.preset);
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    c.sim.steps_per_window = s.value("steps_per_window", c.sim.steps_per_window);
    c.sim.backend = parse_backend(s.value("backend", to_string(c.sim.backend)));
    c.sim.threshold = parse_threshold_mode(s.value("threshold", to_string(c.sim.threshold)));
  }
  if (j.contains("row")) c.flags = AblationFlags::for_row(j["row"].get<std::string>());
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    c.flags.soft = f.value("soft", c.flags.soft);
    c.flags.hard = f.value("hard", c.flags.hard);
    c.flags.relu1 = f.value("relu1", c.flags.relu1);
    c.flags.norm = f.value("norm", c.flags.norm);
    c.flags.dynamic = f.value("dynamic", c.flags.dynamic);
  }
  c.data_dir = j.value("data_dir", std::string());
  c.output_dir = j.value("output_dir", c.output_dir.string());
  c.split = j.value("split", c.split);
  c.train_limit = j.value("train_limit", c.train_limit);
  c.eval_limit = j.value("eval_limit", c.eval_limit);
  c.bins_per_window = j.value("bins_per_window", c.bins_per_window);
  c.neuron_op_weight = j.value("neuron_op_weight", c.neuron_op_weight);
  c.force = j.value("force", c.force);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  try {
    return experiment_from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

fs::path output_directory(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("TTFS_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

namespace {

fs::path data_directory(const ExperimentConfig& cfg) {
  return cfg.data_dir.empty() ? mnist_directory() : cfg.data_dir;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

RunReport evaluate_pair(const Network& net, const SpikingNetwork& snn, const LabeledData& data,
                        const SimConfig& sim, const EvalOptions& opts) {
  sim.validate();
  const bool classify = !data.labels.empty() && net.output_size() != net.input_size();
  const bool dynamic = sim.threshold == ThresholdMode::kDynamic;
  RunReport r;
  r.task = classify ? "classification" : "reconstruction";
  r.split = opts.split;
  r.samples = data.size();
  r.backend = to_string(sim.backend);
  r.threshold = to_string(sim.threshold);
  r.steps_per_window = sim.steps_per_window;
  r.neuron_op_weight = opts.neuron_op_weight;
  r.histogram = SpikeHistogram(snn.schedule.frames(), opts.bins_per_window,
                               snn.schedule.window_length);

  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(net.input_size())));
  const bool square = side * side == net.input_size() && side >= 11;
  ErrorAccumulator errors;
  std::size_t ann_hits = 0, snn_hits = 0, agree = 0;
  double ann_psnr = 0.0, snn_psnr = 0.0, ann_ssim = 0.0, snn_ssim = 0.0;
  constexpr std::size_t kChunk = 250;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t stop = std::min(data.size(), start + kChunk);
    const LabeledData part = data.slice(start, stop);
    ForwardOptions fo;
    fo.record = true;
    const ForwardResult fwd = ann_forward(net, part.images, fo);
    for (std::size_t b = 0; b < part.size(); ++b) {
      const auto x = part.images.row(b);
      const NetworkRun run = run_network(snn, x, sim);
      r.counters += run.counters;
      for (const auto& f : run.frames) r.histogram.add(f);
      const auto z = fwd.output.row(b);
      for (std::size_t o = 0; o < z.size(); ++o) {
        r.max_output_gap = std::max(r.max_output_gap, std::abs(z[o] - run.output[o]));
      }
      if (dynamic) {
        std::vector<std::vector<double>> ann_acts;
        for (std::size_t k = 0; k + 1 < snn.layers.size(); ++k) {
          const auto row = fwd.trace.outputs[snn.layers[k].ann_index].row(b);
          ann_acts.emplace_back(row.begin(), row.end());
        }
        errors.add(ann_acts, decode_run(snn, run));
      }
      if (classify) {
        const int label = part.labels[b];
        const int pa = argmax(z);
        const int ps = argmax(run.output);
        ann_hits += pa == label;
        snn_hits += ps == label;
        agree += pa == ps;
      } else {
        std::vector<double> ya(z.size()), ys(z.size());
        for (std::size_t o = 0; o < z.size(); ++o) {
          ya[o] = logistic(z[o]);
          ys[o] = logistic(run.output[o]);
        }
        ann_psnr += psnr(x, ya);
        snn_psnr += psnr(x, ys);
        if (square) {
          ann_ssim += ssim(x, ya, side, side);
          snn_ssim += ssim(x, ys, side, side);
        }
      }
    }
  }
  const double n = data.size() ? static_cast<double>(data.size()) : 1.0;
  r.ann_accuracy = ann_hits / n;
  r.snn_accuracy = snn_hits / n;
  r.argmax_agreement = agree / n;
  r.ann_psnr = ann_psnr / n;
  r.snn_psnr = snn_psnr / n;
  r.ann_ssim = ann_ssim / n;
  r.snn_ssim = snn_ssim / n;
  r.conversion_error = errors.result();
  r.power_proxy = power_proxy(r.counters, opts.neuron_op_weight);
  r.out_of_window_fraction = r.histogram.out_of_window_fraction();
  for (std::size_t f = 0; f < r.histogram.frames(); ++f) r.missing_spikes += r.histogram.missing(f);
  return r;
}

namespace {

TrainRun train_into(const ExperimentConfig& base, const fs::path& out, const Progress& progress) {
  ExperimentConfig cfg = base;
  cfg.apply_flags();
  cfg.validate();
  fs::create_directories(out);
  const fs::path dir = data_directory(cfg);
  const LabeledData train_set = DatasetHandle{dir, Split::kTrain}.load(cfg.train_limit);
  const LabeledData validation = DatasetHandle{dir, Split::kValidation}.load(cfg.eval_limit);

  TrainRun tr;
  tr.net = init_weights(
      build_preset(cfg.preset, cfg.flags.relu1 ? Activation::kRelu1 : Activation::kRelu),
      cfg.train.seed, preset_init_gain(cfg.preset));
  const fs::path log_path = out / "train_log.csv";
  fs::remove(log_path);
  tr.result = train(tr.net, train_set, &validation, cfg.train, [&](const EpochLog& log) {
    append_epoch_log(log_path, log);
    if (progress) {
      std::ostringstream msg;
      msg << "epoch " << log.epoch << " lr " << log.learning_rate << " loss " << log.total_loss
          << " val " << log.validation_metric << " dev " << log.max_step_deviation;
      progress(msg.str());
    }
  });
  tr.audit = verify_convertibility(tr.net);
  tr.container = out / "model.ttfs";
  save_model(tr.container, tr.net,
             {{"preset", cfg.preset},
              {"seed", cfg.train.seed},
              {"train_config", to_json(cfg.train)},
              {"row", cfg.flags.row_label()},
              {"convertible", tr.audit.pass()},
              {"train_max_step_deviation", tr.result.max_step_deviation}});
  return tr;
}

}  // namespace

TrainRun cmd_train(const ExperimentConfig& cfg, const Progress& progress) {
  return train_into(cfg, output_directory(cfg), progress);
}

ConvertRun cmd_convert(const fs::path& model, const ExperimentConfig& cfg) {
  ModelContainer mc = load_model(model);
  const fs::path out = output_directory(cfg);
  ConvertRun cr;
  cr.report = out / "convert_report.json";
  try {
    cr.snn = convert(mc.net, cfg.force);
  } catch (const ConversionRefused& e) {
    write_text(cr.report, to_json(e.report()).dump(2) + "\n");
    throw;
  }
  write_text(cr.report, to_json(cr.snn.report).dump(2) + "\n");
  cr.artifact = out / "snn.ttfs";
  nlohmann::json extra = mc.header;
  for (const char* k : {"format_version", "layers", "max_weight_sum_deviation", "blob_bytes",
                        "blob_crc32", "snn"}) {
    extra.erase(k);
  }
  save_spiking(cr.artifact, mc.net, cr.snn, extra);
  return cr;
}

namespace {

LabeledData load_eval_split(const ExperimentConfig& cfg) {
  return DatasetHandle{data_directory(cfg), parse_split(cfg.split)}.load(cfg.eval_limit);
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  return {cfg.bins_per_window, cfg.neuron_op_weight, cfg.split};
}

}  // namespace

RunReport cmd_evaluate(const fs::path& artifact, const ExperimentConfig& cfg) {
  cfg.validate();
  const SpikingArtifact a = load_spiking(artifact);
  LabeledData data = load_eval_split(cfg);
  if (a.net.output_size() == a.net.input_size()) data.labels.clear();
  const RunReport r = evaluate_pair(a.net, a.snn, data, cfg.sim, eval_options(cfg));
  const fs::path out = output_directory(cfg);
  write_text(out / "run_report.json", report_to_json(r) + "\n");
  write_histogram_csv(out / "histogram.csv", r.histogram);
  return r;
}

SimulateRun cmd_simulate(const fs::path& artifact, std::size_t sample,
                         const ExperimentConfig& cfg) {
  cfg.validate();
  const SpikingArtifact a = load_spiking(artifact);
  const LabeledData data = load_eval_split(cfg);
  if (sample >= data.size()) {
    throw ConfigError("sample " + std::to_string(sample) + " out of range (" +
                      std::to_string(data.size()) + " samples)");
  }
  SimulateRun s;
  s.run = run_network(a.snn, data.images.row(sample), cfg.sim);
  s.trace = output_directory(cfg) / "spike_trace.csv";
  write_spike_trace_csv(s.trace, s.run.frames);
  return s;
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& base,
                                    const std::optional<Network>& baseline,
                                    const Progress& progress) {
  base.validate();
  const fs::path root = output_directory(base);
  const LabeledData test = load_eval_split(base);
  std::optional<Network> baseline_net = baseline;
  std::vector<AblationRow> rows;
  for (const std::string& label : ablation_rows()) {
    ExperimentConfig cfg = base;
    cfg.flags = AblationFlags::for_row(label);
    cfg.apply_flags();
    Network net;
    const bool reuse = cfg.flags.soft && cfg.flags.hard && cfg.flags.relu1 && cfg.flags.norm;
    if (reuse && baseline_net) {
      net = *baseline_net;
    } else {
      if (progress) progress("training row " + label);
      net = train_into(cfg, root / ("row-" + label), progress).net;
      if (reuse) baseline_net = net;
    }
    AblationRow row;
    row.label = label;
    row.flags = cfg.flags;
    const SpikingNetwork snn = convert(net, true);
    row.convertible = !snn.report.forced;
    row.max_deviation = snn.report.max_deviation();
    const RunReport r = evaluate_pair(net, snn, test, cfg.sim, eval_options(cfg));
    row.ann_accuracy = r.ann_accuracy;
    row.snn_accuracy = r.snn_accuracy;
    row.out_of_window_fraction = r.out_of_window_fraction;
    rows.push_back(row);
    if (progress) {
      std::ostringstream msg;
      msg << "row " << label << " ann " << row.ann_accuracy << " snn " << row.snn_accuracy;
      progress(msg.str());
    }
  }
  write_text(root / "ablation.csv", ablation_table(rows));
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "model,soft,hard,relu1,norm,dynamic,ann_acc,snn_acc,delta,convertible,"
         "max_weight_sum_deviation,out_of_window_fraction\n";
  out << std::fixed;
  for (const auto& r : rows) {
    out << r.label << ',' << r.flags.soft << ',' << r.flags.hard << ',' << r.flags.relu1 << ','
        << r.flags.norm << ',' << r.flags.dynamic << ',' << std::setprecision(2)
        << 100.0 * r.ann_accuracy << ',' << 100.0 * r.snn_accuracy << ',' << 100.0 * r.delta()
        << ',' << r.convertible << ',' << std::scientific << std::setprecision(3)
        << r.max_deviation << ',' << std::fixed << std::setprecision(4)
        << r.out_of_window_fraction << '\n';
  }
  return out.str();
}

double cmd_power_proxy(const fs::path& report, double neuron_op_weight) {
  return power_proxy(report_from_json(read_text(report)).counters, neuron_op_weight);
}

void cmd_export_hist(const fs::path& report, const fs::path& csv) {
  const RunReport r = report_from_json(read_text(report));
  if (r.histogram.frames() == 0) throw FormatError(report.string() + " holds no histogram", 0);
  write_histogram_csv(csv, r.histogram);
}

}  // namespace ttfs
