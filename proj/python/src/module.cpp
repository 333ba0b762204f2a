#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ctl/bench.hpp"
#include "ctl/encoder.hpp"
#include "ctl/metrics.hpp"
#include "ctl/trainer.hpp"

namespace py = pybind11;
using namespace ctl;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Dataset dataset_from_arrays(FloatArray vectors, std::vector<std::uint64_t> ids,
                            std::vector<std::uint32_t> classes, std::vector<std::uint16_t> views,
                            std::vector<std::string> splits) {
  if (vectors.ndim() != 2) throw std::invalid_argument("vectors must be a 2-d array");
  const auto n = static_cast<std::size_t>(vectors.shape(0));
  const auto dim = static_cast<std::size_t>(vectors.shape(1));
  if (ids.size() != n || classes.size() != n || views.size() != n || splits.size() != n) {
    throw std::invalid_argument("metadata lengths must match the number of vectors");
  }
  std::vector<EmbeddingRecord> recs(n);
  const float* data = vectors.data();
  for (std::size_t i = 0; i < n; ++i) {
    recs[i] = {ids[i], classes[i], views[i], parse_split(splits[i]),
               Vector(data + i * dim, data + (i + 1) * dim)};
  }
  return Dataset(dim, std::move(recs));
}

FloatArray dataset_vectors(const Dataset& ds) {
  FloatArray out({ds.size(), ds.dim()});
  float* dst = out.mutable_data();
  for (std::size_t i = 0; i < ds.size(); ++i)
    std::copy(ds[i].vector.begin(), ds[i].vector.end(), dst + i * ds.dim());
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["mode"] = std::string(to_string(r.mode));
  d["cross_view"] = r.cross_view;
  d["mAP"] = r.mean_ap;
  d["acc_at_k"] = r.acc_at_k;
  d["queries_evaluated"] = r.evaluated;
  d["queries_skipped"] = r.skipped;
  d["candidates"] = r.candidates;
  return d;
}

RankingResult ranking_from(const std::vector<bool>& relevant) {
  RankingResult r;
  for (std::size_t i = 0; i < relevant.size(); ++i) r.entries.push_back({i, 0, 0.0, relevant[i]});
  return r;
}

}  // namespace

PYBIND11_MODULE(_ctlkit, m) {
  m.doc() = "Centroid triplet loss training and centroid-based retrieval";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", PyExc_ValueError);
  py::register_exception<ZeroNormError>(m, "ZeroNormError", PyExc_ValueError);
  py::register_exception<NoEligibleTargets>(m, "NoEligibleTargets", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("vectors"), py::arg("ids"), py::arg("class_ids"),
           py::arg("view_ids"), py::arg("splits"))
      .def_property_readonly("dim", &Dataset::dim)
      .def("__len__", &Dataset::size)
      .def("vectors", &dataset_vectors)
      .def("ids", [](const Dataset& ds) {
        std::vector<std::uint64_t> v;
        for (const auto& r : ds.records()) v.push_back(r.id);
        return v;
      })
      .def("class_ids", [](const Dataset& ds) {
        std::vector<std::uint32_t> v;
        for (const auto& r : ds.records()) v.push_back(r.class_id);
        return v;
      })
      .def("view_ids", [](const Dataset& ds) {
        std::vector<std::uint16_t> v;
        for (const auto& r : ds.records()) v.push_back(r.view_id);
        return v;
      })
      .def("splits", [](const Dataset& ds) {
        std::vector<std::string> v;
        for (const auto& r : ds.records()) v.emplace_back(to_string(r.split));
        return v;
      })
      .def("count", [](const Dataset& ds, const std::string& s) { return ds.count(parse_split(s)); })
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def("generate_synthetic",
        [](std::size_t classes, std::size_t per_class, std::size_t dim, double sigma, std::size_t views,
           std::uint64_t seed, std::size_t train_classes) {
          SyntheticSpec s;
          s.num_classes = classes;
          s.samples_per_class = per_class;
          s.dim = dim;
          s.noise_sigma = sigma;
          s.num_views = views;
          s.seed = seed;
          s.train_classes = train_classes;
          return generate_synthetic(s);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("sigma"), py::arg("views"),
        py::arg("seed"), py::arg("train_classes") = 0);

  m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("path"));
  m.def("save_dataset",
        [](const Dataset& ds, const std::filesystem::path& p) { save_dataset(ds, p, format_for_path(p)); },
        py::arg("dataset"), py::arg("path"));

  py::class_<MlpEncoder>(m, "Encoder")
      .def_property_readonly("input_dim", &MlpEncoder::input_dim)
      .def_property_readonly("embedding_dim", &MlpEncoder::embedding_dim)
      .def("embed", [](const MlpEncoder& e, const Dataset& ds) { return embed_dataset(ds, e); })
      .def("to_bytes", [](const MlpEncoder& e) {
        const auto b = encode_checkpoint(e);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def("save", [](const MlpEncoder& e, const std::filesystem::path& p) { save_checkpoint(e, p); });
  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); });

  m.def("train",
        [](const Dataset& ds, const std::string& config) {
          const auto cfg = parse_train_config(config);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = train(ds, cfg);
          }
          return py::make_tuple(std::move(r.encoder), format_loss_log(r.log));
        },
        py::arg("dataset"), py::arg("config") = "",
        "Train an encoder; `config` uses the key=value format of the CLI. Returns (encoder, loss_log_csv).");
  m.def("default_config", [] { return format_train_config(TrainConfig{}); });
  m.def("lr_at_epoch",
        [](std::size_t epoch, const std::string& config) { return lr_at_epoch(parse_train_config(config), epoch); },
        py::arg("epoch"), py::arg("config") = "");

  m.def("evaluate",
        [](const Dataset& ds, const std::string& mode, bool cross_view) {
          return report_dict(evaluate(ds, parse_eval_mode(mode), cross_view));
        },
        py::arg("dataset"), py::arg("mode"), py::arg("cross_view") = false);
  m.def("average_precision",
        [](const std::vector<bool>& rel, std::size_t total) { return average_precision(ranking_from(rel), total); },
        py::arg("relevant"), py::arg("num_relevant_total"));
  m.def("accuracy_at_k",
        [](const std::vector<bool>& rel, std::size_t k) { return accuracy_at_k(ranking_from(rel), k); },
        py::arg("relevant"), py::arg("k"));

  m.def("bench",
        [](const Dataset& ds, std::size_t repeats) {
          BenchOptions o;
          o.repeats = repeats;
          const auto rep = bench_retrieval(ds, {EvalMode::instance, EvalMode::centroid}, o);
          py::list rows;
          for (const auto& r : rep.rows) {
            py::dict d;
            d["mode"] = std::string(to_string(r.mode));
            d["candidates"] = r.candidates;
            d["bytes"] = r.file_bytes;
            d["payload_bytes"] = r.payload_bytes;
            d["seconds"] = r.eval_seconds;
            rows.append(d);
          }
          return rows;
        },
        py::arg("dataset"), py::arg("repeats") = 3);
}
