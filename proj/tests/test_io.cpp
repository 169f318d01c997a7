#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "ttfs/experiment.hpp"
#include "ttfs/io.hpp"

using namespace ttfs;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ttfs_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<unsigned char> image_fixture(std::uint32_t n) {
  std::vector<unsigned char> b;
  put_u32(b, 0x00000803);
  put_u32(b, n);
  put_u32(b, 28);
  put_u32(b, 28);
  for (std::uint32_t i = 0; i < n * 28 * 28; ++i) b.push_back(static_cast<unsigned char>(i % 256));
  return b;
}

std::vector<unsigned char> label_fixture(std::uint32_t n) {
  std::vector<unsigned char> b;
  put_u32(b, 0x00000801);
  put_u32(b, n);
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

}  // namespace

using Idx = TempDir;

TEST_F(Idx, ImageFixture) {
  write_bytes(dir_ / "img", image_fixture(4));
  const Tensor t = load_idx(dir_ / "img");
  EXPECT_EQ(t.shape(), (Shape{4, 28, 28}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[255], 1.0);
  EXPECT_EQ(t[51], 51.0 / 255.0);
}

TEST_F(Idx, LabelFixture) {
  write_bytes(dir_ / "lab", label_fixture(4));
  EXPECT_EQ(load_idx(dir_ / "lab").shape(), (Shape{4}));
  EXPECT_EQ(load_idx_labels(dir_ / "lab"), (std::vector<int>{0, 1, 2, 3}));
}

TEST_F(Idx, BadMagic) {
  auto b = image_fixture(2);
  b[3] = 0x04;
  write_bytes(dir_ / "bad", b);
  try {
    load_idx(dir_ / "bad");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST_F(Idx, TruncatedPayload) {
  auto b = image_fixture(2);
  b.resize(b.size() - 10);
  write_bytes(dir_ / "short", b);
  try {
    load_idx(dir_ / "short");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 16u);
  }
}

TEST_F(Idx, MissingFile) { EXPECT_THROW(load_idx(dir_ / "nope"), DatasetError); }

TEST_F(Idx, SplitsOfTrainingFile) {
  write_bytes(dir_ / "train-images-idx3-ubyte", image_fixture(5010));
  write_bytes(dir_ / "train-labels-idx1-ubyte", label_fixture(5010));
  const LabeledData tr = DatasetHandle{dir_, Split::kTrain}.load();
  const LabeledData va = DatasetHandle{dir_, Split::kValidation}.load();
  EXPECT_EQ(tr.size(), 10u);
  EXPECT_EQ(va.size(), 5000u);
  EXPECT_EQ(va.labels.front(), 0);
  EXPECT_EQ((DatasetHandle{dir_, Split::kTrain}.load(3).size()), 3u);
  EXPECT_THROW((DatasetHandle{dir_, Split::kTest}.load()), DatasetError);
  for (double v : tr.images.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

using Container = TempDir;

TEST_F(Container, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  const Network net = testutil::random_conv_net(rng);
  save_model(dir_ / "m.ttfs", net, {{"seed", 5}});
  const ModelContainer mc = load_model(dir_ / "m.ttfs");
  EXPECT_EQ(mc.net.weights, net.weights);
  EXPECT_EQ(mc.net.layers.size(), net.layers.size());
  EXPECT_EQ(mc.header.at("seed"), 5);
  for (double d : mc.max_deviation) EXPECT_LE(d, 1e-12);
}

TEST_F(Container, CorruptedBlobFailsChecksum) {
  std::mt19937_64 rng(2);
  save_model(dir_ / "m.ttfs", testutil::random_dense_net(rng));
  auto b = read_bytes(dir_ / "m.ttfs");
  b[b.size() - 3] ^= 0x10;
  write_bytes(dir_ / "m.ttfs", b);
  EXPECT_THROW(load_model(dir_ / "m.ttfs"), ChecksumError);
}

TEST_F(Container, UnknownVersionAndBadMagic) {
  std::mt19937_64 rng(3);
  save_model(dir_ / "m.ttfs", testutil::random_dense_net(rng));
  auto b = read_bytes(dir_ / "m.ttfs");
  const std::string text(b.begin(), b.end());
  const std::size_t pos = text.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  b[pos + 18] = '7';
  write_bytes(dir_ / "v.ttfs", b);
  EXPECT_THROW(load_model(dir_ / "v.ttfs"), FormatError);
  b[0] = 'X';
  write_bytes(dir_ / "x.ttfs", b);
  EXPECT_THROW(load_model(dir_ / "x.ttfs"), FormatError);
}

TEST_F(Container, ReportsDeviationsOfUnconstrainedNet) {
  std::mt19937_64 rng(4);
  Network net = make_network({LayerSpec::dense(5, 4, Activation::kRelu1),
                              LayerSpec::dense(4, 2, Activation::kNone)});
  for (auto& w : net.weights) w = testutil::random_tensor(rng, w.shape());
  save_model(dir_ / "m.ttfs", net);
  const ModelContainer mc = load_model(dir_ / "m.ttfs");
  EXPECT_GT(mc.max_deviation[0], 1e-3);
  EXPECT_GT(mc.header.at("max_weight_sum_deviation")[0].get<double>(), 1e-3);
}

TEST_F(Container, SpikingArtifactRoundTrip) {
  std::mt19937_64 rng(5);
  const Network net = testutil::random_dense_net(rng);
  const SpikingNetwork snn = convert(net);
  save_spiking(dir_ / "s.ttfs", net, snn);
  const SpikingArtifact a = load_spiking(dir_ / "s.ttfs");
  ASSERT_EQ(a.snn.layers.size(), snn.layers.size());
  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    EXPECT_EQ(a.snn.layers[k].weights, snn.layers[k].weights);
  }
  EXPECT_EQ(a.snn.schedule.readout_time(), snn.schedule.readout_time());
  EXPECT_THROW(load_spiking(dir_ / "missing.ttfs"), std::exception);
  save_model(dir_ / "plain.ttfs", net);
  EXPECT_THROW(load_spiking(dir_ / "plain.ttfs"), FormatError);
}

using Files = TempDir;

TEST_F(Files, HistogramAndTraceCsv) {
  SpikeHistogram h(2, 2);
  h.add({1, {1.2, 2.0}});
  write_histogram_csv(dir_ / "h.csv", h);
  const std::string csv = read_text(dir_ / "h.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,bin_start,bin_end,count");
  EXPECT_NE(csv.find("1,1.5,2,1"), std::string::npos) << csv;

  write_spike_trace_csv(dir_ / "t.csv", {{0, {0.5}}, {1, {kNoSpike}}});
  const std::string trace = read_text(dir_ / "t.csv");
  EXPECT_NE(trace.find("0,0,0.5"), std::string::npos) << trace;
  EXPECT_NE(trace.find("1,0,inf"), std::string::npos) << trace;
}

TEST_F(Files, EpochLogAppends) {
  EpochLog a;
  a.epoch = 1;
  EpochLog b;
  b.epoch = 2;
  append_epoch_log(dir_ / "log.csv", a);
  append_epoch_log(dir_ / "log.csv", b);
  const std::string text = read_text(dir_ / "log.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.rfind("epoch", 0), 0u);
}

TEST(Config, ExperimentJsonRoundTrip) {
  ExperimentConfig cfg;
  cfg.preset = "cnn-small";
  cfg.flags = AblationFlags::for_row("2a");
  cfg.train.seed = 99;
  cfg.sim.steps_per_window = 20;
  cfg.apply_flags();
  const ExperimentConfig back = experiment_from_json(to_json(cfg));
  EXPECT_EQ(back.preset, "cnn-small");
  EXPECT_EQ(back.flags, cfg.flags);
  EXPECT_EQ(back.flags.row_label(), "2a");
  EXPECT_EQ(back.train.seed, 99u);
  EXPECT_FALSE(back.train.hard_constraint);
  EXPECT_EQ(back.sim.steps_per_window, 20);
}

TEST(Config, PresetTrainingDefaults) {
  const ExperimentConfig ae = experiment_from_json({{"preset", "ae-784-128-64-32-64-128-784"}});
  EXPECT_EQ(ae.train.task_loss, TaskLoss::kMeanSquared);
  EXPECT_EQ(ae.train.learning_rate, 0.01);
  const ExperimentConfig tuned = experiment_from_json(
      {{"preset", "ae-784-128-64-32-64-128-784"}, {"train", {{"epochs", 3}}}});
  EXPECT_EQ(tuned.train.learning_rate, 0.01);
  EXPECT_EQ(tuned.train.epochs, 3);
  EXPECT_EQ(experiment_from_json({{"preset", "mlp-784-300-10"}}).train.learning_rate, 0.05);
  EXPECT_EQ(preset_init_gain("ae-784-128-64-32-64-128-784"), 2.0);
  EXPECT_EQ(preset_init_gain("mlp-784-300-10"), 0.0);
}

TEST(Config, AblationRowLabels) {
  for (const auto& row : ablation_rows()) EXPECT_EQ(AblationFlags::for_row(row).row_label(), row);
  AblationFlags odd;
  odd.hard = false;
  odd.norm = false;
  EXPECT_EQ(odd.row_label(), "custom");
}

TEST(Config, OutputDirectoryOverride) {
  ExperimentConfig cfg;
  cfg.output_dir = "somewhere";
  ::unsetenv("TTFS_OUTPUT_DIR");
  EXPECT_EQ(output_directory(cfg), fs::path("somewhere"));
  ::setenv("TTFS_OUTPUT_DIR", "/tmp/elsewhere", 1);
  EXPECT_EQ(output_directory(cfg), fs::path("/tmp/elsewhere"));
  ::unsetenv("TTFS_OUTPUT_DIR");
}

TEST_F(Container, ZeroEpochTrainingSavesInitialisation) {
  const fs::path data = mnist_directory();
  if (!mnist_available(data)) GTEST_SKIP() << "MNIST not found in " << data;
  ExperimentConfig cfg;
  cfg.train.epochs = 0;
  cfg.train_limit = 100;
  cfg.eval_limit = 100;
  cfg.output_dir = dir_;
  ::unsetenv("TTFS_OUTPUT_DIR");
  const TrainRun tr = cmd_train(cfg);
  const ModelContainer mc = load_model(tr.container);
  const Network init =
      init_weights(build_preset(cfg.preset), cfg.train.seed, preset_init_gain(cfg.preset));
  EXPECT_EQ(mc.net.weights, init.weights);
}
