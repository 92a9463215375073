#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "trlab/cca.hpp"
#include "trlab/data.hpp"
#include "trlab/harness.hpp"
#include "trlab/init.hpp"
#include "trlab/weights.hpp"

namespace py = pybind11;
using namespace trlab;

namespace {

template <typename T>
py::array_t<T> to_numpy(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> a(shape);
  std::copy(t.raw(), t.raw() + t.size(), a.mutable_data());
  return a;
}

template <typename T>
Tensor<T> from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

py::dict cca_dict(const CcaResult& r) {
  py::dict d;
  d["similarity"] = r.similarity;
  d["correlations"] = r.correlations;
  d["kept_x"] = r.kept_x;
  d["kept_y"] = r.kept_y;
  return d;
}

py::dict result_dict(const ExperimentResult& r) {
  py::dict d;
  d["fingerprint"] = r.fingerprint;
  d["dir"] = r.dir;
  d["checkpoint"] = r.checkpoint;
  d["steps_run"] = r.steps_run;
  d["steps_to_threshold"] = r.steps_to_threshold;
  d["final_mean_auc"] = r.final_mean_auc;
  d["final_auc"] = r.final_auc;
  d["cached"] = r.cached;
  d["log_csv"] = r.log.csv();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transfer-learning laboratory: CCA, AUC, initializers and experiment runs";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def(
      "auc_roc",
      [](const std::vector<double>& scores, const std::vector<double>& labels) { return auc_roc(scores, labels); },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "cca",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y, double epsilon) {
        return cca_dict(cca(from_numpy<double>(x), from_numpy<double>(y), epsilon));
      },
      py::arg("x"), py::arg("y"), py::arg("epsilon") = 1e-6,
      "Mean canonical correlation of two neurons x samples matrices.");

  m.def(
      "svcca",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y, double threshold, double epsilon) {
        return cca_dict(svcca(from_numpy<double>(x), from_numpy<double>(y), threshold, epsilon));
      },
      py::arg("x"), py::arg("y"), py::arg("variance_threshold") = 0.99, py::arg("epsilon") = 1e-6);

  m.def(
      "gabor_bank",
      [](std::size_t n_angles, std::vector<double> sigmas, std::vector<double> freqs) {
        GaborConfig c;
        c.n_angles = n_angles;
        c.sigmas = std::move(sigmas);
        c.freqs = std::move(freqs);
        return to_numpy(gabor_bank(c));
      },
      py::arg("n_angles") = 16, py::arg("sigmas") = std::vector<double>{2.0},
      py::arg("freqs") = std::vector<double>{0.08, 0.16, 0.25, 0.32});

  m.def(
      "param_count",
      [](const std::string& variant, std::size_t size, std::size_t channels, std::size_t classes) {
        return param_count(build_cbr(parse_cbr_variant(variant), {size, size, channels}, classes));
      },
      py::arg("variant"), py::arg("size") = 64, py::arg("channels") = 3, py::arg("classes") = 5);

  m.def(
      "synth_dataset",
      [](const std::string& kind, std::size_t n, std::size_t size, std::size_t classes, std::uint64_t seed) {
        SynthTaskConfig c;
        c.kind = parse_synth_kind(kind);
        c.n = n;
        c.image_size = size;
        c.num_classes = classes;
        c.seed = seed;
        const DatasetBundle b = synth_dataset(c);
        return py::make_tuple(to_numpy(b.images), to_numpy(b.labels), b.group_ids);
      },
      py::arg("kind") = "local-dots", py::arg("n") = 100, py::arg("size") = 64, py::arg("classes") = 5,
      py::arg("seed") = 1, "Returns (images N x H x W x C, labels N x classes, group ids).");

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        Metadata meta;
        const WeightStore w = load_checkpoint(path, &meta);
        py::dict tensors;
        for (const auto& e : w.entries()) tensors[py::str(e.name)] = to_numpy(e.value);
        return py::make_tuple(tensors, meta);
      },
      py::arg("path"), "Returns ({tensor name: array}, metadata).");

  m.def(
      "run_experiment",
      [](const std::string& config_text, bool force) {
        const ExperimentConfig c = ExperimentConfig::parse(config_text);
        c.validate();
        py::gil_scoped_release release;
        ExperimentResult r = run_experiment(c, force);
        py::gil_scoped_acquire acquire;
        return result_dict(r);
      },
      py::arg("config"), py::arg("force") = false, "Runs one experiment from `key = value` config text.");

  m.def("config_keys", [] { return ExperimentConfig::key_docs(); });
}
