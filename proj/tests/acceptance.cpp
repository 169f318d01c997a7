// Acceptance suite: one PASS/FAIL line per criterion.
//
//   ttfs_acceptance [--only 1,2,3] [--runs DIR]
//
// MNIST criteria (4-7) are reported as SKIP when the IDX files are missing;
// the process then exits with 77 if nothing failed.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "test_util.hpp"
#include "ttfs/experiment.hpp"

using namespace ttfs;
namespace fs = std::filesystem;

namespace {

namespace tol {
constexpr double kLossless = 1e-12;
constexpr double kGridSlack = 1e-12;  // added to dt for the per-neuron gap
constexpr double kRefineRatio = 2.0;
constexpr double kC1Seconds = 60.0;
constexpr double kC2Seconds = 120.0;
constexpr double kAnnAccuracy = 0.97;
constexpr double kAccuracyDelta = 0.005;
constexpr double kArgmaxAgreement = 0.99;
constexpr double kC4Seconds = 30 * 60.0;
constexpr double kPsnrGap = 0.2;
constexpr double kSsimGap = 0.01;
constexpr double kC5Seconds = 45 * 60.0;
constexpr double kAblationHard = 0.02;
constexpr double kAblationSoftHard = 0.20;
constexpr double kAblationDynamic = 0.05;
constexpr double kChanceMultiple = 2.0;
constexpr double kFeasibility = 1e-12;
constexpr double kGradient = 1e-4;
}  // namespace tol

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;
int skips = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::cout << "criterion " << id << ' ' << (pass ? "PASS" : "FAIL") << "  " << detail
            << std::endl;
  if (!pass) ++failures;
}

void skip(int id, const std::string& why) {
  std::cout << "criterion " << id << " SKIP  " << why << std::endl;
  ++skips;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double max_gap(std::span<const double> a, std::span<const double> b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i] - b[i]));
  return g;
}

SimConfig sim(Backend b, ThresholdMode m = ThresholdMode::kDynamic, int steps = 50) {
  SimConfig c;
  c.backend = b;
  c.threshold = m;
  c.steps_per_window = steps;
  return c;
}

// Shared by criteria 1 and 2.
struct RandomCase {
  Network net;
  SpikingNetwork snn;
  std::vector<double> x;
};

std::vector<RandomCase> random_cases(std::size_t n) {
  std::mt19937_64 rng(20240601);
  std::vector<RandomCase> out;
  for (std::size_t i = 0; i < n; ++i) {
    RandomCase c;
    c.net = testutil::random_dense_net(rng);
    c.snn = convert(c.net);
    c.x = testutil::random_input(rng, c.net.input_size());
    out.push_back(std::move(c));
  }
  return out;
}

void criterion1(const std::vector<RandomCase>& cases) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& c : cases) {
    const NetworkRun run = run_network(c.snn, c.x, sim(Backend::kExact));
    const auto ann = testutil::ann_hidden(c.net, c.snn, c.x);
    const auto dec = decode_run(c.snn, run);
    for (std::size_t l = 0; l < ann.size(); ++l) worst = std::max(worst, max_gap(ann[l], dec[l]));
    const ForwardResult f = ann_forward(c.net, Tensor::vector(c.x));
    worst = std::max(worst, max_gap(f.output.data(), run.output));
  }
  const double s = seconds_since(t0);
  verdict(1, worst <= tol::kLossless && s <= tol::kC1Seconds,
          "lossless identity: max |a_ann - a_snn| " + fmt(worst) + " <= " + fmt(tol::kLossless) +
              " over " + std::to_string(cases.size()) + " nets (" + fmt(s) + " s)");
}

void criterion2(const std::vector<RandomCase>& cases) {
  const auto t0 = Clock::now();
  double coarse = 0.0, fine = 0.0;
  bool bounded = true;
  for (const auto& c : cases) {
    const NetworkRun exact = run_network(c.snn, c.x, sim(Backend::kExact));
    for (std::size_t k = 0; k + 1 < c.snn.layers.size(); ++k) {
      const auto& ref = exact.frames[k + 1].times;
      const auto d50 = simulate_discrete(c.snn, k, exact.frames[k], sim(Backend::kDiscrete)).times;
      const auto d200 = simulate_discrete(c.snn, k, exact.frames[k],
                                          sim(Backend::kDiscrete, ThresholdMode::kDynamic, 200))
                            .times;
      const double g50 = max_gap(ref, d50);
      const double g200 = max_gap(ref, d200);
      bounded = bounded && g50 <= 1.0 / 50 + tol::kGridSlack && g200 <= 1.0 / 200 + tol::kGridSlack;
      coarse = std::max(coarse, g50);
      fine = std::max(fine, g200);
    }
  }
  const double s = seconds_since(t0);
  const double ratio = fine > 0.0 ? coarse / fine : INFINITY;
  verdict(2, bounded && ratio >= tol::kRefineRatio && s <= tol::kC2Seconds,
          "quantization: max gap " + fmt(coarse) + " <= dt 0.02 at 50 steps, " + fmt(fine) +
              " at 200 steps, ratio " + fmt(ratio) + " >= " + fmt(tol::kRefineRatio) + " (" +
              fmt(s) + " s)");
}

void criterion3() {
  Network net = make_network({LayerSpec::dense(2, 1, Activation::kRelu1),
                              LayerSpec::dense(1, 1, Activation::kNone)});
  net.weights[0] = Tensor({1, 2}, {5.0, -10.0});
  net.weights[1] = Tensor({1, 1}, {1.0});
  const SpikingNetwork snn = convert(net, true);
  const SpikeFrame in{0, {0.2, 0.6}};
  bool pass = true;
  std::ostringstream detail;
  for (Backend b : {Backend::kExact, Backend::kDiscrete}) {
    const double tc = simulate_layer(snn, 0, in, sim(b, ThresholdMode::kFixed)).times[0];
    const double a = decode_spikes(simulate_layer(snn, 0, in, sim(b)), 1)[0];
    pass = pass && tc == 0.4 && a == 0.0;
    detail << to_string(b) << ": fixed t_C " << tc << ", dynamic a_C " << a << "; ";
  }
  const double ann = ann_forward(net, Tensor::vector({0.8, 0.4})).output[0];
  pass = pass && ann == 0.0;
  detail << "ann a_C " << ann;
  verdict(3, pass, "premature spike: " + detail.str());
}

ExperimentConfig mnist_config(const fs::path& runs, const std::string& preset) {
  ExperimentConfig cfg;
  cfg.preset = preset;
  cfg.train = preset_train_defaults(preset);
  cfg.output_dir = runs / preset;
  cfg.split = "test";
  cfg.apply_flags();
  return cfg;
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  EvalOptions o;
  o.bins_per_window = cfg.bins_per_window;
  o.neuron_op_weight = cfg.neuron_op_weight;
  o.split = cfg.split;
  return o;
}

void mnist_criteria(const std::set<int>& want, const fs::path& runs) {
  const fs::path data = mnist_directory();
  if (!mnist_available(data)) {
    for (int id : {4, 5, 6, 7}) {
      if (want.count(id)) skip(id, "MNIST IDX files not found in " + data.string());
    }
    return;
  }
  auto log = [](const std::string& m) { std::cerr << "  " << m << std::endl; };
  const LabeledData test = DatasetHandle{data, Split::kTest}.load();

  std::optional<TrainRun> baseline;
  if (want.count(4) || want.count(6) || want.count(7)) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = mnist_config(runs, "mlp-784-300-10");
    std::cerr << "training baseline mlp" << std::endl;
    baseline = cmd_train(cfg, log);
    const SpikingNetwork snn = convert(baseline->net);
    const RunReport r = evaluate_pair(baseline->net, snn, test, cfg.sim, eval_options(cfg));
    write_text(runs / "baseline_report.json", report_to_json(r));
    const double s = seconds_since(t0);
    if (want.count(4)) {
      const double delta = std::abs(r.accuracy_delta());
      verdict(4,
              r.ann_accuracy >= tol::kAnnAccuracy && delta <= tol::kAccuracyDelta &&
                  r.argmax_agreement >= tol::kArgmaxAgreement && s <= tol::kC4Seconds,
              "mnist mlp: ann " + fmt(r.ann_accuracy) + " >= " + fmt(tol::kAnnAccuracy) +
                  ", snn " + fmt(r.snn_accuracy) + ", |delta| " + fmt(delta) + " <= " +
                  fmt(tol::kAccuracyDelta) + ", agreement " + fmt(r.argmax_agreement) +
                  " >= " + fmt(tol::kArgmaxAgreement) + " (" + fmt(s) + " s)");
    }
  }

  if (want.count(5)) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = mnist_config(runs, "ae-784-128-64-32-64-128-784");
    std::cerr << "training autoencoder" << std::endl;
    const TrainRun tr = cmd_train(cfg, log);
    const SpikingNetwork snn = convert(tr.net);
    const RunReport r = evaluate_pair(tr.net, snn, test, cfg.sim, eval_options(cfg));
    write_text(runs / "autoencoder_report.json", report_to_json(r));
    const double s = seconds_since(t0);
    const double dp = std::abs(r.ann_psnr - r.snn_psnr);
    const double ds = std::abs(r.ann_ssim - r.snn_ssim);
    verdict(5, dp <= tol::kPsnrGap && ds <= tol::kSsimGap && s <= tol::kC5Seconds,
            "autoencoder: psnr ann/snn " + fmt(r.ann_psnr) + "/" + fmt(r.snn_psnr) + " gap " +
                fmt(dp) + " <= " + fmt(tol::kPsnrGap) + ", ssim " + fmt(r.ann_ssim) + "/" +
                fmt(r.snn_ssim) + " gap " + fmt(ds) + " <= " + fmt(tol::kSsimGap) + " (" +
                fmt(s) + " s)");
  }

  if (want.count(6)) {
    ExperimentConfig cfg = mnist_config(runs, "mlp-784-300-10");
    cfg.output_dir = runs / "ablation";
    std::cerr << "ablation rows" << std::endl;
    const auto rows = cmd_ablate(cfg, baseline->net, log);
    std::cerr << ablation_table(rows);
    auto row = [&](const std::string& label) -> const AblationRow& {
      for (const auto& r : rows) {
        if (r.label == label) return r;
      }
      throw std::runtime_error("ablation row " + label + " missing");
    };
    const double base = std::abs(row("baseline").delta());
    const double d2a = std::abs(row("2a").delta()) - base;
    const double d2b = std::abs(row("2b").delta()) - base;
    const double d5 = std::abs(row("5").delta()) - base;
    const double oow5 = row("5").out_of_window_fraction;
    const double snn1 = row("1").snn_accuracy;
    const bool a = d2a >= tol::kAblationHard;
    const bool b = d2b >= tol::kAblationSoftHard;
    const bool c = d5 >= tol::kAblationDynamic && oow5 > 0.0;
    const bool d = snn1 <= tol::kChanceMultiple * 0.1;
    verdict(6, a && b && c && d,
            std::string("ablation: (a) ") + (a ? "ok" : "miss") + " +" + fmt(100 * d2a) +
                " pts >= 2, (b) " + (b ? "ok" : "miss") + " +" + fmt(100 * d2b) +
                " pts >= 20, (c) " + (c ? "ok" : "miss") + " +" + fmt(100 * d5) +
                " pts >= 5 with out-of-window " + fmt(oow5) + ", (d) " + (d ? "ok" : "miss") +
                " row-1 snn " + fmt(snn1) + " <= 0.2");
  }

  if (want.count(7)) {
    Network once = project_weight_sums(baseline->net);
    const Network twice = project_weight_sums(once);
    const bool idempotent = once.weights == twice.weights;
    const double dev = baseline->result.max_step_deviation;
    verdict(7, dev <= tol::kFeasibility && idempotent,
            "feasibility: max |sum w - 1| after any of " + std::to_string(baseline->result.steps) +
                " steps " + fmt(dev) + " <= " + fmt(tol::kFeasibility) + ", projection " +
                (idempotent ? "idempotent" : "not idempotent"));
  }
}

void criterion8() {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    worst = std::max(worst, testutil::total_loss_gradient_error(rng));
  }
  double task = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = testutil::random_tensor(rng, {3, 4}, -2.0, 2.0);
    const Tensor y = testutil::random_tensor(rng, {3, 4}, 0.0, 1.0);
    for (auto loss : {logistic_mse, logistic_sse}) {
      const LossValue l = loss(z, y);
      auto f = [&] { return loss(z, y).value; };
      for (std::size_t i = 0; i < z.size(); ++i) {
        task = std::max(task, testutil::relative_error(
                                  l.grad[i], testutil::central_difference(f, z[i], 1e-5)));
      }
    }
  }
  worst = std::max(worst, task);
  verdict(8, worst <= tol::kGradient,
          "gradients: max relative error " + fmt(worst) + " <= " + fmt(tol::kGradient) +
              " (cross-entropy + weight-sum + pre-activation terms through the network, "
              "logistic mse and per-image squared-error heads)");
}

void criterion9() {
  Network net = make_network({LayerSpec::dense(2, 3, Activation::kRelu1),
                              LayerSpec::dense(3, 1, Activation::kNone)});
  net.weights[0] = Tensor({3, 2}, {0.6, 0.4, 1.0, 0.0, 5.0, -10.0});
  net.weights[1] = Tensor({1, 3}, {1.0, 1.0, -1.0});
  const SpikingNetwork snn = convert(net, true);
  const std::vector<double> x{0.8, 0.4};
  const OpCounters dyn = run_network(snn, x, sim(Backend::kDiscrete)).counters;
  const OpCounters fixed =
      run_network(snn, x, sim(Backend::kDiscrete, ThresholdMode::kFixed)).counters;
  const OpCounters exact = run_network(snn, x, sim(Backend::kExact)).counters;
  const bool counts = dyn == OpCounters{9, 200} && fixed == OpCounters{9, 248} &&
                      exact == OpCounters{9, 9};
  bool linear = true;
  for (double w : {0.0, 0.5, 1.0, 2.0, 10.0}) {
    linear = linear && power_proxy(dyn, w) == 9.0 + 200.0 * w;
  }
  verdict(9, counts && linear,
          "op counts: discrete dynamic " + std::to_string(dyn.syn_ops) + "/" +
              std::to_string(dyn.neuron_ops) + " (want 9/200), fixed " +
              std::to_string(fixed.syn_ops) + "/" + std::to_string(fixed.neuron_ops) +
              " (9/248), exact " + std::to_string(exact.syn_ops) + "/" +
              std::to_string(exact.neuron_ops) + " (9/9), proxy " +
              (linear ? "linear" : "not linear") + " in the op weight");
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want{1, 2, 3, 4, 5, 6, 7, 8, 9};
  fs::path runs = fs::temp_directory_path() / "ttfs_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      want = parse_only(argv[++i]);
    } else if (arg == "--runs" && i + 1 < argc) {
      runs = argv[++i];
    } else {
      std::cerr << "usage: " << argv[0] << " [--only 1,2,...] [--runs DIR]\n";
      return 2;
    }
  }
  ::unsetenv("TTFS_OUTPUT_DIR");
  try {
    if (want.count(1) || want.count(2)) {
      const auto cases = random_cases(100);
      if (want.count(1)) criterion1(cases);
      if (want.count(2)) criterion2(cases);
    }
    if (want.count(3)) criterion3();
    if (want.count(4) || want.count(5) || want.count(6) || want.count(7)) {
      fs::create_directories(runs);
      mnist_criteria(want, runs);
    }
    if (want.count(8)) criterion8();
    if (want.count(9)) criterion9();
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed"
                         : "acceptance: all run criteria passed")
            << std::endl;
  if (failures) return 1;
  return skips ? 77 : 0;
}
