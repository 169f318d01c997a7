#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ttfs/convert.hpp"
#include "ttfs/experiment.hpp"
#include "ttfs/io.hpp"
#include "ttfs/metrics.hpp"
#include "ttfs/simulate.hpp"
#include "ttfs/train.hpp"

namespace py = pybind11;
using namespace ttfs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Array& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

py::array_t<double> to_array(std::span<const double> v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ttfs core bindings";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SequencingError>(m, "SequencingError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<ChecksumError>(m, "ChecksumError", PyExc_RuntimeError);
  py::register_exception<ConversionRefused>(m, "ConversionRefused", PyExc_RuntimeError);

  py::enum_<Backend>(m, "Backend")
      .value("DISCRETE", Backend::kDiscrete)
      .value("EXACT", Backend::kExact);
  py::enum_<ThresholdMode>(m, "ThresholdMode")
      .value("DYNAMIC", ThresholdMode::kDynamic)
      .value("FIXED", ThresholdMode::kFixed);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init([](Backend b, ThresholdMode t, int steps) {
             SimConfig c;
             c.backend = b;
             c.threshold = t;
             c.steps_per_window = steps;
             c.validate();
             return c;
           }),
           py::arg("backend") = Backend::kDiscrete, py::arg("threshold") = ThresholdMode::kDynamic,
           py::arg("steps_per_window") = 50)
      .def_readwrite("backend", &SimConfig::backend)
      .def_readwrite("threshold", &SimConfig::threshold)
      .def_readwrite("steps_per_window", &SimConfig::steps_per_window);

  py::class_<OpCounters>(m, "OpCounters")
      .def(py::init<>())
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("syn_ops"), py::arg("neuron_ops"))
      .def_readwrite("syn_ops", &OpCounters::syn_ops)
      .def_readwrite("neuron_ops", &OpCounters::neuron_ops);

  py::class_<Network>(m, "Network")
      .def_property_readonly("input_size", &Network::input_size)
      .def_property_readonly("output_size", &Network::output_size)
      .def_property_readonly("param_count", &Network::param_count)
      .def_property_readonly("layer_count", [](const Network& n) { return n.layers.size(); })
      .def("layer_kind", [](const Network& n, std::size_t i) { return to_string(n.layers.at(i).kind); })
      .def("weights", [](const Network& n, std::size_t i) {
        const Tensor& w = n.weights.at(i);
        std::vector<py::ssize_t> shape(w.shape().begin(), w.shape().end());
        py::array_t<double> out(shape);
        std::copy(w.data().begin(), w.data().end(), out.mutable_data());
        return out;
      })
      .def("set_weights", [](Network& n, std::size_t i, const Array& a) {
        Tensor& w = n.weights.at(i);
        if (static_cast<std::size_t>(a.size()) != w.size()) throw ShapeError("weight size mismatch");
        std::copy(a.data(), a.data() + a.size(), w.data().begin());
      })
      .def("forward", [](const Network& n, const Array& x) {
        const auto in = view(x);
        return to_array(ann_forward(n, Tensor::vector({in.begin(), in.end()})).output.data());
      });

  py::class_<SpikingNetwork>(m, "SpikingNetwork")
      .def_property_readonly("layer_count", [](const SpikingNetwork& s) { return s.layers.size(); })
      .def_property_readonly("readout_time", [](const SpikingNetwork& s) { return s.schedule.readout_time(); })
      .def_property_readonly("forced", [](const SpikingNetwork& s) { return s.report.forced; });

  m.def("build_preset", [](const std::string& name, std::uint64_t seed) {
    return init_weights(build_preset(name), seed, preset_init_gain(name));
  }, py::arg("name"), py::arg("seed") = 1);
  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p).net; });
  m.def("save_model", [](const std::filesystem::path& p, const Network& n) { save_model(p, n); });
  m.def("project_weight_sums", &project_weight_sums);
  m.def("convert", &convert, py::arg("net"), py::arg("force") = false);

  m.def("encode_input", [](const Array& a) { return to_array(encode_input(view(a)).times); });
  m.def("decode_spikes", [](const Array& t, std::size_t frame) {
    const auto v = view(t);
    return to_array(decode_spikes({frame, {v.begin(), v.end()}}, frame));
  }, py::arg("times"), py::arg("frame"));

  m.def("membrane_potential", [](const Array& t, const Array& w, double at) {
    return membrane_potential(view(t), view(w), at);
  });
  m.def("solve_spike_exact", [](const Array& t, const Array& w, double theta, double ta, double tb,
                                ThresholdMode mode) {
    return solve_spike_exact(view(t), view(w), theta, ta, tb, mode);
  }, py::arg("times"), py::arg("weights"), py::arg("theta"), py::arg("t_a"), py::arg("t_b"),
     py::arg("mode") = ThresholdMode::kDynamic);
  m.def("solve_spike_discrete", [](const Array& t, const Array& w, double theta, double ta, double tb,
                                   int steps, ThresholdMode mode) {
    return solve_spike_discrete(view(t), view(w), theta, ta, tb, steps, mode);
  }, py::arg("times"), py::arg("weights"), py::arg("theta"), py::arg("t_a"), py::arg("t_b"),
     py::arg("steps_per_window") = 50, py::arg("mode") = ThresholdMode::kDynamic);

  m.def("run_network", [](const SpikingNetwork& snn, const Array& x, const SimConfig& cfg) {
    const NetworkRun run = run_network(snn, view(x), cfg);
    py::list frames;
    for (const auto& f : run.frames) frames.append(to_array(f.times));
    py::dict d;
    d["output"] = to_array(run.output);
    d["frames"] = frames;
    d["hidden"] = decode_run(snn, run);
    d["counters"] = run.counters;
    return d;
  }, py::arg("snn"), py::arg("input"), py::arg("config") = SimConfig{});

  m.def("power_proxy", &power_proxy, py::arg("counters"), py::arg("neuron_op_weight") = 1.0);
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(view(a), view(b)); });
  m.def("ssim", [](const Array& a, const Array& b, std::size_t h, std::size_t w) {
    return ssim(view(a), view(b), h, w);
  });
}
