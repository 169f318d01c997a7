#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttfs/convert.hpp"
#include "ttfs/metrics.hpp"
#include "ttfs/train.hpp"

namespace ttfs {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses an IDX file. Image files (magic 0x803) are scaled by 1/255 and keep
/// their [N x rows x cols] shape; label files (0x801) return raw values as
/// shape [N].
Tensor load_idx(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);

enum class Split { kTrain, kValidation, kTest };
std::string to_string(Split s);
Split parse_split(const std::string& s);

/// train: first 55000 images of the training file, validation: the last
/// 5000, test: the t10k file.
struct DatasetHandle {
  static constexpr std::size_t kValidationSize = 5000;

  std::filesystem::path directory;
  Split split = Split::kTest;

  LabeledData load(std::size_t limit = 0) const;
};

/// TTFS_MNIST_DIR when set, otherwise `fallback`.
std::filesystem::path mnist_directory(const std::filesystem::path& fallback = "/root/data/mnist");
bool mnist_available(const std::filesystem::path& directory);

nlohmann::json to_json(const LayerSpec& spec);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
/// Keys missing from `j` keep their value from `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const ConvertReport& report);

/// File layout: 8-byte magic "TTFSMDL1", u64 LE header length, JSON header,
/// u64 LE blob length, blob of LE float64 parameters in layer order.
struct ModelContainer {
  static constexpr int kFormatVersion = 1;

  Network net;
  nlohmann::json header;  // train config echo, seed, deviations, optional "snn" section
  std::vector<double> max_deviation;  // recomputed on load
};

void save_model(const std::filesystem::path& path, const Network& net,
                const nlohmann::json& extra_header = nlohmann::json::object());
ModelContainer load_model(const std::filesystem::path& path);

/// A spiking artifact is a model container whose header carries an "snn"
/// section (schedule, forced flag, convert report). Loading re-runs the
/// deterministic weight copy.
void save_spiking(const std::filesystem::path& path, const Network& net,
                  const SpikingNetwork& snn, const nlohmann::json& extra_header = nlohmann::json::object());
struct SpikingArtifact {
  Network net;
  SpikingNetwork snn;
  nlohmann::json header;
};
SpikingArtifact load_spiking(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
/// Columns: layer,bin_start,bin_end,count.
void write_histogram_csv(const std::filesystem::path& path, const SpikeHistogram& hist);
/// Columns: layer,neuron,time (missing spikes written as "inf").
void write_spike_trace_csv(const std::filesystem::path& path,
                           const std::vector<SpikeFrame>& frames);

/// Appends one CSV row per epoch, writing the header when the file is new.
void append_epoch_log(const std::filesystem::path& path, const EpochLog& log);

}  // namespace ttfs
