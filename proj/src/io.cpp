#include "ttfs/io.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>

#include <zlib.h>

namespace ttfs {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset,
                        const fs::path& path) {
  if (offset + 4 > b.size()) {
    throw FormatError(path.string() + ": truncated header", offset);
  }
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

struct IdxRaw {
  std::uint32_t magic;
  std::vector<std::size_t> dims;
  std::size_t payload_offset;
  std::vector<unsigned char> bytes;
};

IdxRaw parse_idx(const fs::path& path) {
  IdxRaw raw;
  raw.bytes = read_bytes(path);
  raw.magic = read_be32(raw.bytes, 0, path);
  std::size_t rank;
  if (raw.magic == kIdxImagesMagic) {
    rank = 3;
  } else if (raw.magic == kIdxLabelsMagic) {
    rank = 1;
  } else {
    std::ostringstream msg;
    msg << path.string() << ": bad IDX magic 0x" << std::hex << std::setw(8) << std::setfill('0')
        << raw.magic;
    throw FormatError(msg.str(), 0);
  }
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t n = read_be32(raw.bytes, 4 + 4 * d, path);
    if (n == 0) throw FormatError(path.string() + ": zero dimension", 4 + 4 * d);
    raw.dims.push_back(n);
    count *= n;
  }
  raw.payload_offset = 4 + 4 * rank;
  if (raw.bytes.size() < raw.payload_offset + count) {
    throw FormatError(path.string() + ": truncated payload, expected " + std::to_string(count) +
                          " bytes",
                      raw.bytes.size());
  }
  return raw;
}

}  // namespace

Tensor load_idx(const fs::path& path) {
  const IdxRaw raw = parse_idx(path);
  Tensor t(Shape(raw.dims.begin(), raw.dims.end()));
  const double scale = raw.magic == kIdxImagesMagic ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = raw.bytes[raw.payload_offset + i] * scale;
  return t;
}

std::vector<int> load_idx_labels(const fs::path& path) {
  const IdxRaw raw = parse_idx(path);
  if (raw.magic != kIdxLabelsMagic) {
    throw FormatError(path.string() + ": not an IDX label file", 0);
  }
  return {raw.bytes.begin() + static_cast<std::ptrdiff_t>(raw.payload_offset),
          raw.bytes.begin() + static_cast<std::ptrdiff_t>(raw.payload_offset + raw.dims[0])};
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    default: return "test";
  }
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

LabeledData DatasetHandle::load(std::size_t limit) const {
  const bool test = split == Split::kTest;
  const fs::path images = directory / (test ? "t10k-images-idx3-ubyte" : "train-images-idx3-ubyte");
  const fs::path labels = directory / (test ? "t10k-labels-idx1-ubyte" : "train-labels-idx1-ubyte");
  if (!fs::exists(images) || !fs::exists(labels)) {
    throw DatasetError("MNIST files not found in " + directory.string());
  }
  const Tensor img = load_idx(images);
  const std::vector<int> lab = load_idx_labels(labels);
  const std::size_t n = img.dim(0);
  if (lab.size() != n) throw DatasetError("image and label counts differ in " + directory.string());
  std::size_t begin = 0;
  std::size_t end = n;
  if (split == Split::kTrain) {
    if (n <= kValidationSize) throw DatasetError("training file too small to split");
    end = n - kValidationSize;
  } else if (split == Split::kValidation) {
    begin = n - kValidationSize;
  }
  if (limit > 0) end = std::min(end, begin + limit);
  const std::size_t d = img.size() / n;
  std::vector<double> data(img.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                           img.data().begin() + static_cast<std::ptrdiff_t>(end * d));
  LabeledData out{Tensor({end - begin, d}, std::move(data)), {}};
  out.labels.assign(lab.begin() + static_cast<std::ptrdiff_t>(begin),
                    lab.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

fs::path mnist_directory(const fs::path& fallback) {
  if (const char* env = std::getenv("TTFS_MNIST_DIR"); env && *env) return env;
  return fallback;
}

bool mnist_available(const fs::path& dir) {
  for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                        "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
    if (!fs::exists(dir / f)) return false;
  }
  return true;
}

nlohmann::json to_json(const LayerSpec& s) {
  auto shape = [](const Shape2D& x) {
    return nlohmann::json::array({x.channels, x.height, x.width});
  };
  nlohmann::json j{{"kind", to_string(s.kind)},
                   {"in", shape(s.in)},
                   {"out", shape(s.out)},
                   {"activation", to_string(s.activation)}};
  if (s.kind == LayerKind::kConv2d) {
    j["kernel"] = s.kernel;
    j["stride"] = s.stride;
    j["padding"] = s.padding;
  }
  if (s.kind == LayerKind::kAvgPool) j["window"] = s.window;
  if (s.kind == LayerKind::kDropout) j["dropout"] = s.dropout;
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  auto shape = [](const nlohmann::json& a) {
    return Shape2D{a.at(1).get<std::size_t>(), a.at(2).get<std::size_t>(),
                   a.at(0).get<std::size_t>()};
  };
  LayerSpec s;
  s.kind = parse_layer_kind(j.at("kind").get<std::string>());
  s.in = shape(j.at("in"));
  s.out = shape(j.at("out"));
  s.activation = parse_activation(j.value("activation", "none"));
  s.kernel = j.value("kernel", std::size_t{0});
  s.stride = j.value("stride", std::size_t{1});
  s.padding = j.value("padding", std::size_t{0});
  s.window = j.value("window", std::size_t{0});
  s.dropout = j.value("dropout", 0.0);
  s.validate();
  return s;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda_w", c.lambda_w},
          {"lambda_a", c.lambda_a},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"milestones", c.milestones},
          {"decay_factor", c.decay_factor},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"task_loss", to_string(c.task_loss)},
          {"soft_constraint", c.soft_constraint},
          {"hard_constraint", c.hard_constraint},
          {"preact_norm", c.preact_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  TrainConfig c = std::move(base);
  c.lambda_w = j.value("lambda_w", c.lambda_w);
  c.lambda_a = j.value("lambda_a", c.lambda_a);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.milestones = j.value("milestones", c.milestones);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.task_loss = parse_task_loss(j.value("task_loss", to_string(c.task_loss)));
  c.soft_constraint = j.value("soft_constraint", c.soft_constraint);
  c.hard_constraint = j.value("hard_constraint", c.hard_constraint);
  c.preact_norm = j.value("preact_norm", c.preact_norm);
  c.validate();
  return c;
}

nlohmann::json to_json(const ConvertReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"ann_index", l.ann_index},
                      {"kind", to_string(l.kind)},
                      {"activation", to_string(l.activation)},
                      {"output", l.output},
                      {"max_weight_sum_deviation", l.max_deviation},
                      {"deviation_ok", l.deviation_ok},
                      {"activation_ok", l.activation_ok}});
  }
  return {{"pass", r.pass()},
          {"forced", r.forced},
          {"deviation_tolerance", ConvertReport::kDeviationTolerance},
          {"max_weight_sum_deviation", r.max_deviation()},
          {"issues", r.issues},
          {"layers", layers}};
}

namespace {

constexpr char kMagic[8] = {'T', 'T', 'F', 'S', 'M', 'D', 'L', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const std::vector<unsigned char>& b, std::size_t offset,
                      const std::string& what) {
  if (offset + 8 > b.size()) throw FormatError("container truncated in " + what, offset);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[offset + static_cast<std::size_t>(i)];
  return v;
}

std::vector<unsigned char> encode_blob(const Network& net) {
  std::vector<unsigned char> blob;
  for (const auto& w : net.weights) {
    for (double v : w.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) blob.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
  }
  return blob;
}

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::json build_header(const Network& net, const nlohmann::json& extra,
                            std::uint32_t crc, std::size_t blob_size) {
  nlohmann::json h = extra.is_object() ? extra : nlohmann::json::object();
  h["format_version"] = ModelContainer::kFormatVersion;
  nlohmann::json layers = nlohmann::json::array();
  nlohmann::json devs = nlohmann::json::array();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    layers.push_back(to_json(net.layers[i]));
    devs.push_back(net.constrained(i)
                       ? max_weight_sum_deviation(net.layers[i], net.weights[i])
                       : 0.0);
  }
  h["layers"] = layers;
  h["max_weight_sum_deviation"] = devs;
  h["blob_bytes"] = blob_size;
  h["blob_crc32"] = crc;
  return h;
}

}  // namespace

void save_model(const fs::path& path, const Network& net, const nlohmann::json& extra_header) {
  net.validate();
  const std::vector<unsigned char> blob = encode_blob(net);
  const nlohmann::json header =
      build_header(net, extra_header, crc_of(blob.data(), blob.size()), blob.size());
  const std::string text = header.dump(2);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(out, blob.size());
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelContainer load_model(const fs::path& path) {
  std::vector<unsigned char> b;
  try {
    b = read_bytes(path);
  } catch (const DatasetError&) {
    throw std::runtime_error("cannot open model container " + path.string());
  }
  if (b.size() < sizeof kMagic || std::memcmp(b.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + ": not a model container", 0);
  }
  std::size_t off = sizeof kMagic;
  const std::uint64_t header_len = get_u64(b, off, "header length");
  off += 8;
  if (off + header_len > b.size()) throw FormatError("container header truncated", b.size());
  ModelContainer mc;
  try {
    mc.header = nlohmann::json::parse(b.begin() + static_cast<std::ptrdiff_t>(off),
                                      b.begin() + static_cast<std::ptrdiff_t>(off + header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("container header: ") + e.what(), off + e.byte);
  }
  off += header_len;
  const int version = mc.header.value("format_version", -1);
  if (version != ModelContainer::kFormatVersion) {
    throw FormatError("unknown container format version " + std::to_string(version),
                      sizeof kMagic + 8);
  }
  const std::uint64_t blob_len = get_u64(b, off, "blob length");
  off += 8;
  if (off + blob_len > b.size()) throw FormatError("container blob truncated", b.size());
  const std::uint32_t crc = crc_of(b.data() + off, blob_len);
  if (crc != mc.header.at("blob_crc32").get<std::uint32_t>()) {
    throw ChecksumError("container blob checksum mismatch in " + path.string());
  }
  std::vector<LayerSpec> layers;
  for (const auto& lj : mc.header.at("layers")) layers.push_back(layer_from_json(lj));
  mc.net = make_network(std::move(layers));
  std::size_t expected = 0;
  for (const auto& w : mc.net.weights) expected += w.size() * 8;
  if (expected != blob_len) {
    throw FormatError("blob holds " + std::to_string(blob_len) + " bytes, layers declare " +
                          std::to_string(expected),
                      off);
  }
  for (auto& w : mc.net.weights) {
    for (double& v : w.data()) {
      std::uint64_t bits = 0;
      for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[off + static_cast<std::size_t>(i)];
      v = std::bit_cast<double>(bits);
      off += 8;
    }
  }
  for (std::size_t i = 0; i < mc.net.layers.size(); ++i) {
    mc.max_deviation.push_back(mc.net.constrained(i)
                                   ? max_weight_sum_deviation(mc.net.layers[i], mc.net.weights[i])
                                   : 0.0);
  }
  return mc;
}

void save_spiking(const fs::path& path, const Network& net, const SpikingNetwork& snn,
                  const nlohmann::json& extra_header) {
  nlohmann::json h = extra_header.is_object() ? extra_header : nlohmann::json::object();
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : snn.schedule.windows) windows.push_back({w.start, w.end});
  h["snn"] = {{"window_length", snn.schedule.window_length},
              {"threshold", snn.schedule.threshold},
              {"windows", windows},
              {"readout_time", snn.schedule.readout_time()},
              {"forced", snn.report.forced},
              {"report", to_json(snn.report)}};
  save_model(path, net, h);
}

SpikingArtifact load_spiking(const fs::path& path) {
  ModelContainer mc = load_model(path);
  if (!mc.header.contains("snn")) {
    throw FormatError(path.string() + " is a model container without a spiking section", 0);
  }
  const bool forced = mc.header["snn"].value("forced", false);
  SpikingArtifact a;
  a.snn = convert(mc.net, forced);
  a.net = std::move(mc.net);
  a.header = std::move(mc.header);
  return a;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_histogram_csv(const fs::path& path, const SpikeHistogram& hist) {
  std::ostringstream out;
  out << std::setprecision(17) << "layer,bin_start,bin_end,count\n";
  for (std::size_t f = 0; f < hist.frames(); ++f) {
    const auto& counts = hist.counts(f);
    for (std::size_t b = 0; b < counts.size(); ++b) {
      out << f << ',' << hist.bin_start(b) << ',' << hist.bin_end(b) << ',' << counts[b] << '\n';
    }
  }
  write_text(path, out.str());
}

void write_spike_trace_csv(const fs::path& path, const std::vector<SpikeFrame>& frames) {
  std::ostringstream out;
  out << std::setprecision(17) << "layer,neuron,time\n";
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.times.size(); ++i) {
      out << f.layer << ',' << i << ',';
      if (std::isfinite(f.times[i])) {
        out << f.times[i];
      } else {
        out << "inf";
      }
      out << '\n';
    }
  }
  write_text(path, out.str());
}

void append_epoch_log(const fs::path& path, const EpochLog& log) {
  const bool fresh = !fs::exists(path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << std::setprecision(10);
  if (fresh) {
    out << "epoch,learning_rate,task_loss,weight_sum_loss,preact_loss,total_loss,"
           "validation_metric,max_step_deviation,preact_abs_mean,preact_std_gap\n";
  }
  out << log.epoch << ',' << log.learning_rate << ',' << log.task_loss << ','
      << log.weight_sum_loss << ',' << log.preact_loss << ',' << log.total_loss << ','
      << log.validation_metric << ',' << log.max_step_deviation << ',' << log.preact_abs_mean
      << ',' << log.preact_std_gap << '\n';
}

}  // namespace ttfs
