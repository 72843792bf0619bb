#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fimfuse/checkpoint.hpp"
#include "fimfuse/embedstore.hpp"
#include "fimfuse/errors.hpp"
#include "fimfuse/evaluate.hpp"
#include "fimfuse/interpret.hpp"
#include "fimfuse/kmeans.hpp"
#include "fimfuse/metrics.hpp"
#include "fimfuse/model.hpp"
#include "fimfuse/trainer.hpp"

namespace py = pybind11;
namespace es = fimfuse::embedstore;
using namespace fimfuse;

namespace {

// JSON crosses the boundary as text; both sides already speak it.
py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

RowMatrix<double> to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  RowMatrix<double> m(a.shape(0), a.shape(1));
  std::copy_n(a.data(), a.size(), m.data());
  return m;
}

py::array_t<double> from_matrix(const RowMatrix<double>& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy_n(m.data(), m.size(), out.mutable_data());
  return out;
}

std::vector<std::size_t> split_indices(const es::Dataset& ds, const std::string& split) {
  return ds.indices(es::split_from_string(split));
}

py::array_t<float> stack(const es::Dataset& ds, const std::string& split, bool image) {
  const auto idx = split_indices(ds, split);
  const int d = image ? ds.manifest.d_img : ds.manifest.d_txt;
  py::array_t<float> out({static_cast<py::ssize_t>(idx.size()), static_cast<py::ssize_t>(d)});
  float* dst = out.mutable_data();
  for (std::size_t i : idx) {
    const auto& v = image ? ds.records[i].image_vec : ds.records[i].text_vec;
    dst = std::copy(v.begin(), v.end(), dst);
  }
  return out;
}

struct Model {
  ModelParams<double> params;
  nlohmann::json metadata = nlohmann::json::object();

  std::uint32_t crc() const {
    const auto bytes = encode_checkpoint(params, metadata);
    return crc32_of(std::span(bytes).first(bytes.size() - 4));
  }
};

ModelConfig resolve_model(const py::object& cfg, const es::Dataset* ds) {
  const auto j = from_py(cfg);
  auto c = model_config_from_json(j);
  if (ds != nullptr) {
    if (!j.contains("d_img")) c.d_img = ds->manifest.d_img;
    if (!j.contains("d_txt")) c.d_txt = ds->manifest.d_txt;
    if (!j.contains("task_schema")) c.tasks = ds->manifest.tasks;
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-modal fusion classifiers over precomputed embeddings";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto config = py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", config.ptr());
  py::register_exception<ModeError>(m, "ModeError", config.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", error.ptr());
  auto io = py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", io.ptr());
  py::register_exception<CorruptionError>(m, "CorruptionError", io.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", io.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_AssertionError);

  py::class_<es::Dataset>(m, "Dataset")
      .def_property_readonly("d_img", [](const es::Dataset& d) { return d.manifest.d_img; })
      .def_property_readonly("d_txt", [](const es::Dataset& d) { return d.manifest.d_txt; })
      .def_property_readonly("manifest",
                             [](const es::Dataset& d) { return to_py(es::manifest_to_json(d.manifest)); })
      .def("__len__", [](const es::Dataset& d) { return d.records.size(); })
      .def("ids",
           [](const es::Dataset& d, const std::string& split) {
             std::vector<std::string> out;
             for (std::size_t i : split_indices(d, split)) out.push_back(d.records[i].id);
             return out;
           },
           py::arg("split"))
      .def("labels",
           [](const es::Dataset& d, const std::string& split) {
             std::vector<std::uint8_t> out;
             for (std::size_t i : split_indices(d, split)) out.push_back(d.records[i].label);
             return py::array_t<std::uint8_t>(out.size(), out.data());
           },
           py::arg("split"))
      .def("image", [](const es::Dataset& d, const std::string& s) { return stack(d, s, true); },
           py::arg("split"))
      .def("text", [](const es::Dataset& d, const std::string& s) { return stack(d, s, false); },
           py::arg("split"))
      .def("write",
           [](const es::Dataset& d, const std::string& path) {
             es::write_dataset(d.records, d.manifest, path);
           },
           py::arg("path"));

  m.def("read_dataset", [](const std::string& path) { return es::read_dataset(path); },
        py::arg("path"));

  m.def("synth",
        [](std::uint64_t seed, int latent_dim, int d_img, int d_txt, std::size_t num_train,
           std::size_t num_dev, std::size_t num_test, double noise_sigma, int aux_classes) {
          es::SyntheticSpec s;
          s.seed = seed;
          s.latent_dim = latent_dim;
          s.d_img = d_img;
          s.d_txt = d_txt;
          s.num_train = num_train;
          s.num_dev = num_dev;
          s.num_test = num_test;
          s.noise_sigma = noise_sigma;
          s.aux_classes = aux_classes;
          return es::generate_synthetic(s);
        },
        py::arg("seed"), py::arg("latent_dim") = 8, py::arg("d_img") = 32, py::arg("d_txt") = 32,
        py::arg("num_train") = 2000, py::arg("num_dev") = 500, py::arg("num_test") = 500,
        py::arg("noise_sigma") = 0.0, py::arg("aux_classes") = 0);

  m.def("parameter_count",
        [](const py::object& cfg) { return parameter_count(resolve_model(cfg, nullptr)); },
        py::arg("config"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("config",
                             [](const Model& md) { return to_py(model_config_to_json(md.params.config())); })
      .def_property_readonly("metadata", [](const Model& md) { return to_py(md.metadata); })
      .def_property_readonly("num_parameters", [](const Model& md) { return md.params.size(); })
      .def_property_readonly("crc", &Model::crc)
      .def("parameters",
           [](const Model& md) {
             const auto v = md.params.values();
             return py::array_t<double>(v.size(), v.data());
           })
      .def("save",
           [](const Model& md, const std::string& path) {
             save_checkpoint(path, md.params, md.metadata);
           },
           py::arg("path"))
      .def("predict",
           [](const Model& md, const es::Dataset& ds, const std::string& split, int threads) {
             const auto idx = split_indices(ds, split);
             const auto p = [&] {
               py::gil_scoped_release release;
               return train::predict(ds, idx, md.params, threads);
             }();
             std::vector<double> hateful;
             for (const auto& ex : p.probs) hateful.push_back(ex[0][1]);
             return py::array_t<double>(hateful.size(), hateful.data());
           },
           py::arg("dataset"), py::arg("split") = "test", py::arg("threads") = 1,
           "Probability of the hateful class for every record of the split.")
      .def("evaluate",
           [](const Model& md, const es::Dataset& ds, const std::string& split, int threads) {
             const auto report =
                 train::evaluate(ds, es::split_from_string(split), md.params, threads);
             return to_py(report.to_json());
           },
           py::arg("dataset"), py::arg("split") = "test", py::arg("threads") = 1)
      .def("gradient_matrix",
           [](const Model& md) { return from_matrix(interpret::gradient_matrix(md.params).values); })
      .def("interpret",
           [](const Model& md, const es::Dataset& ds, int k, std::uint64_t seed,
              const std::string& split, int max_iter, int threads) {
             interpret::PipelineOptions o;
             o.k = k;
             o.seed = seed;
             o.split = es::split_from_string(split);
             o.max_iter = max_iter;
             o.threads = threads;
             return to_py(interpret::run_pipeline(ds, md.params, md.crc(), o).report.to_json());
           },
           py::arg("dataset"), py::arg("k") = 15, py::arg("seed") = 0, py::arg("split") = "train",
           py::arg("max_iter") = 300, py::arg("threads") = 1);

  m.def("init_model",
        [](const py::object& cfg, std::uint64_t seed) {
          return Model{init_params<double>(resolve_model(cfg, nullptr), seed)};
        },
        py::arg("config"), py::arg("seed"));

  m.def("load_checkpoint",
        [](const std::string& path) {
          const auto ck = load_checkpoint(path);
          return Model{ck.params<double>(), ck.metadata};
        },
        py::arg("path"));

  m.def("fit",
        [](const es::Dataset& ds, const py::object& model_cfg, const py::object& train_cfg,
           int threads) {
          const auto model = resolve_model(model_cfg, &ds);
          const auto tc = train::train_config_from_json(from_py(train_cfg));
          tc.validate();
          train::FitOptions opts;
          opts.threads = threads;
          auto result = [&] {
            py::gil_scoped_release release;
            return train::fit<double>(ds, model, tc, opts);
          }();
          Model out{std::move(result.best_params),
                    {{"train", train::train_config_to_json(tc)},
                     {"precision", "f64"},
                     {"best_epoch", result.history.best_epoch},
                     {"best_metric", result.history.best_metric}}};
          return py::make_tuple(std::move(out), to_py(result.history.to_json()));
        },
        py::arg("dataset"), py::arg("model_config") = py::none(),
        py::arg("train_config") = py::none(), py::arg("threads") = 1,
        "Train in double precision; returns (best model, history).");

  m.def("auroc",
        [](const Array& scores, const py::array_t<std::uint8_t, py::array::forcecast>& labels) {
          return metrics::auroc(std::span(scores.data(), scores.size()),
                                std::span(labels.data(), labels.size()));
        },
        py::arg("scores"), py::arg("labels"));

  m.def("micro_f1",
        [](const Array& scores, const py::array_t<std::uint8_t, py::array::forcecast>& labels,
           double threshold) {
          const auto s = to_matrix(scores);
          if (labels.ndim() != 2 || labels.shape(0) != s.rows() || labels.shape(1) != s.cols())
            throw DimensionError("labels must match the shape of scores");
          std::vector<metrics::ScoredExample> ex(s.rows());
          for (Eigen::Index i = 0; i < s.rows(); ++i) {
            ex[i].id = std::to_string(i);
            ex[i].scores.assign(s.row(i).data(), s.row(i).data() + s.cols());
            ex[i].labels.assign(labels.data(i, 0), labels.data(i, 0) + s.cols());
          }
          const auto r = metrics::micro_f1(ex, threshold);
          py::dict out;
          out["f1"] = r.f1;
          out["tp"] = r.tp;
          out["fp"] = r.fp;
          out["fn"] = r.fn;
          out["degenerate"] = r.degenerate;
          return out;
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);

  m.def("binarize",
        [](const Array& values, double lower_pct, double upper_pct) {
          const auto b = interpret::binarize_signed_percentile(to_matrix(values), lower_pct, upper_pct);
          py::array_t<std::uint8_t> out({b.rows, b.cols});
          std::copy(b.bits.begin(), b.bits.end(), out.mutable_data());
          return out;
        },
        py::arg("values"), py::arg("lower_pct") = 20.0, py::arg("upper_pct") = 80.0);

  m.def("kmeans",
        [](const Array& points, int k, std::uint64_t seed, int max_iter) {
          const auto r = interpret::kmeans(to_matrix(points), k, seed, max_iter);
          py::dict out;
          out["assignments"] = r.assignments;
          out["inertia"] = r.inertia;
          out["inertia_history"] = r.inertia_history;
          out["iterations"] = r.iterations;
          out["converged"] = r.converged;
          return out;
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 300);
}
