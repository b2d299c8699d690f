#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "pointmt/analysis.hpp"
#include "pointmt/checkpoint.hpp"
#include "pointmt/cli.hpp"
#include "pointmt/config.hpp"
#include "pointmt/errors.hpp"
#include "pointmt/verification.hpp"

namespace py = pybind11;
using namespace pointmt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(std::move(shape), std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor<double> matrix(const Array& a, std::size_t cols, const char* what) {
  if (a.ndim() != 2 || (cols && static_cast<std::size_t>(a.shape(1)) != cols)) {
    throw ShapeError(std::string(what) + " must be a 2-D array" + (cols ? " with " + std::to_string(cols) + " columns" : ""));
  }
  return to_tensor<double>(a);
}

NeighborhoodIndex to_index(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a,
                           std::size_t points) {
  if (a.ndim() != 2) throw ShapeError("neighbor index must be a 2-D array");
  NeighborhoodIndex nbr;
  nbr.queries = a.shape(0);
  nbr.k = a.shape(1);
  nbr.indices.reserve(a.size());
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0 || static_cast<std::size_t>(a.data()[i]) >= points) {
      throw ArgumentError("neighbor index out of range");
    }
    nbr.indices.push_back(static_cast<std::size_t>(a.data()[i]));
  }
  return nbr;
}

py::array_t<std::int64_t> index_array(const NeighborhoodIndex& nbr) {
  py::array_t<std::int64_t> out({static_cast<py::ssize_t>(nbr.queries), static_cast<py::ssize_t>(nbr.k)});
  std::copy(nbr.indices.begin(), nbr.indices.end(), out.mutable_data());
  return out;
}

ModelConfig model_config(const std::string& preset, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (preset == "reference") cfg.model = ModelConfig::reference();
  else if (preset == "desk") cfg.model = ModelConfig::desk();
  else if (preset == "toy") cfg.model = ModelConfig::toy();
  else throw ArgumentError("unknown preset '" + preset + "' (expected reference, desk or toy)");
  for (const auto& o : overrides) apply_override(cfg, o.find('=') != std::string::npos && o.rfind("model.", 0) != 0 ? "model." + o : o);
  cfg.model.validate();
  return cfg.model;
}

py::dict dataset_dict(const Dataset& ds) {
  py::list clouds;
  py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    clouds.append(to_array(ds.samples[i].coords));
    labels.mutable_data()[i] = static_cast<std::int64_t>(*ds.samples[i].label);
  }
  py::dict d;
  d["clouds"] = clouds;
  d["labels"] = labels;
  d["class_names"] = ds.class_names;
  d["split"] = ds.split;
  return d;
}

Dataset dataset_from(const py::list& clouds, const std::vector<std::int64_t>& labels,
                     const std::vector<std::string>& class_names, const std::string& split) {
  if (clouds.size() != labels.size()) throw ArgumentError("clouds and labels differ in length");
  Dataset ds;
  ds.class_names = class_names;
  ds.split = split;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    PointCloud<float> c;
    const FloatArray a = clouds[i].cast<FloatArray>();
    if (a.ndim() != 2 || a.shape(1) != 3) throw ShapeError("every cloud must be an N x 3 array");
    c.coords = to_tensor<float>(a);
    if (labels[i] < 0) throw ArgumentError("labels must be non-negative");
    c.label = static_cast<std::size_t>(labels[i]);
    ds.samples.push_back(std::move(c));
  }
  ds.validate();
  return ds;
}

py::dict inference_dict(const Classifier<double>::Inference& r) {
  py::dict d;
  d["prediction"] = to_array(r.prediction);
  d["point_logits"] = to_array(r.spf.point_logits);
  d["shape_logit"] = to_array(r.spf.shape_logit);
  d["combined"] = to_array(r.spf.combined);
  d["pooled"] = to_array(r.pooled);
  d["features"] = to_array(r.features);
  d["stage_counts"] = r.stage_counts;
  return d;
}

AttentionMode parse_mode(const std::string& s) {
  if (s == "linear") return AttentionMode::linear;
  if (s == "quadratic") return AttentionMode::quadratic;
  throw ArgumentError("attention mode must be linear or quadratic");
}

}  // namespace

PYBIND11_MODULE(_pointmt, m) {
  m.doc() = "PointMT: linear and temperature-adaptive local attention for point clouds.";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  // Geometry.
  m.def("knn", [](const Array& coords, std::size_t k, std::optional<Array> queries) {
        const auto c = matrix(coords, 3, "coords");
        return index_array(knn(c, queries ? matrix(*queries, 3, "queries") : c, k));
      },
      py::arg("coords"), py::arg("k"), py::arg("queries") = py::none(),
      "Indices of the k nearest points of `coords` for every query, nearest first.");
  m.def("farthest_point_sample", [](const Array& coords, std::size_t m) {
        return farthest_point_sample(matrix(coords, 3, "coords"), m);
      },
      py::arg("coords"), py::arg("m"));
  m.def("normalize_cloud", [](const Array& coords) {
        PointCloud<double> c;
        c.coords = matrix(coords, 3, "coords");
        return to_array(normalize_cloud(c).coords);
      },
      py::arg("coords"));

  // Attention.
  py::class_<AttentionParams<double>>(m, "AttentionParams")
      .def_static("random", [](std::size_t channels, bool ta, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return AttentionParams<double>::random(channels, ta, rng);
          },
          py::arg("channels"), py::arg("ta_enabled") = true, py::arg("seed") = 0)
      .def_property_readonly("channels", &AttentionParams<double>::channels)
      .def_property("ta_enabled", [](const AttentionParams<double>& p) { return p.options.ta_enabled; },
                    [](AttentionParams<double>& p, bool v) { p.options.ta_enabled = v; })
      .def_property("force_unit_temperature",
                    [](const AttentionParams<double>& p) { return p.options.force_unit_temperature; },
                    [](AttentionParams<double>& p, bool v) { p.options.force_unit_temperature = v; })
      .def_property_readonly("weights", [](const AttentionParams<double>& p) {
        py::dict d;
        d["q"] = to_array(p.linear_q.weight);
        d["k"] = to_array(p.linear_k.weight);
        d["v"] = to_array(p.linear_v.weight);
        if (p.linear_q.bias) d["q_bias"] = to_array(*p.linear_q.bias);
        if (p.linear_k.bias) d["k_bias"] = to_array(*p.linear_k.bias);
        if (p.linear_v.bias) d["v_bias"] = to_array(*p.linear_v.bias);
        return d;
      });

  m.def("linear_attention", [](const Array& f, const py::array_t<std::int64_t>& nbr, const AttentionParams<double>& p) {
        const auto x = matrix(f, p.channels(), "features");
        return to_array(linear_local_attention(x, to_index(nbr, x.rows()), p).z);
      },
      py::arg("features"), py::arg("neighbors"), py::arg("params"));
  m.def("ta_attention", [](const Array& f, const py::array_t<std::int64_t>& nbr, const AttentionParams<double>& p) {
        const auto x = matrix(f, p.channels(), "features");
        return to_array(ta_attention(x, to_index(nbr, x.rows()), p).z);
      },
      py::arg("features"), py::arg("neighbors"), py::arg("params"));
  m.def("quadratic_attention", [](const Array& f, const py::array_t<std::int64_t>& nbr, const AttentionParams<double>& p) {
        const auto x = matrix(f, p.channels(), "features");
        return to_array(quadratic_local_attention(x, to_index(nbr, x.rows()), p));
      },
      py::arg("features"), py::arg("neighbors"), py::arg("params"));
  m.def("moment_decomposition", [](const Array& w, const Array& v) {
        const auto s = moment_decomposition(to_tensor<double>(w), matrix(v, 0, "values"));
        py::dict d;
        d["weighted_mean"] = to_array(s.weighted_mean);
        d["diversity"] = to_array(s.diversity);
        d["second_moment"] = to_array(s.second_moment);
        return d;
      },
      py::arg("w_token"), py::arg("values"));
  m.def("flop_count", [](const std::string& mode, std::size_t n, std::size_t k, std::size_t c) {
        const auto f = flop_count(parse_mode(mode), n, k, c);
        py::dict d;
        d["projection"] = f.projection;
        d["gather"] = f.gather;
        d["score"] = f.score;
        d["softmax"] = f.softmax;
        d["aggregation"] = f.aggregation;
        d["score_aggregation"] = f.score_aggregation();
        d["total"] = f.total();
        return d;
      },
      py::arg("mode"), py::arg("n"), py::arg("k"), py::arg("c"));

  // Model.
  m.def("param_breakdown", [](const std::string& preset, const std::vector<std::string>& overrides) {
        std::vector<std::pair<std::string, std::size_t>> out;
        for (const auto& g : param_breakdown(model_config(preset, overrides))) out.emplace_back(g.module, g.count);
        return out;
      },
      py::arg("preset") = "reference", py::arg("overrides") = std::vector<std::string>{});
  m.def("param_count", [](const std::string& preset, const std::vector<std::string>& overrides) {
        return param_count(model_config(preset, overrides));
      },
      py::arg("preset") = "reference", py::arg("overrides") = std::vector<std::string>{});

  py::class_<Classifier<double>>(m, "Classifier")
      .def(py::init([](const std::string& preset, std::uint64_t seed, const std::vector<std::string>& overrides) {
             return Classifier<double>(model_config(preset, overrides), seed);
           }),
           py::arg("preset") = "desk", py::arg("seed") = 42, py::arg("overrides") = std::vector<std::string>{},
           "Overrides are 'key=value' model settings, e.g. 'head=traditional'.")
      .def_static("load", [](const std::filesystem::path& manifest) {
            const auto meta = read_checkpoint_manifest(manifest).at("metadata");
            Classifier<double> model(model_config_from_json(meta.at("model")), 0);
            load_checkpoint(model.parameters(), manifest);
            return model;
          },
          py::arg("manifest"), "Loads a model.json written by `pmt train`.")
      .def_property_readonly("num_parameters", [](const Classifier<double>& c) { return c.parameters().scalar_count(); })
      .def_property_readonly("config", [](const Classifier<double>& c) { return to_json(c.config()).dump(); })
      .def("infer", [](const Classifier<double>& c, const Array& coords) {
            return inference_dict(c.infer(matrix(coords, 3, "coords")));
          },
          py::arg("coords"));

  // Data.
  m.def("generate_synthetic", [](std::size_t samples_per_class, std::size_t test_samples_per_class,
                                 std::size_t points, double noise, std::uint64_t seed, const std::string& split) {
        SynthConfig cfg;
        cfg.samples_per_class = samples_per_class;
        cfg.test_samples_per_class = test_samples_per_class;
        cfg.points_per_cloud = points;
        cfg.noise_sigma = noise;
        cfg.seed = seed;
        cfg.validate();
        return dataset_dict(generate_synthetic(cfg, split));
      },
      py::arg("samples_per_class") = 64, py::arg("test_samples_per_class") = 16, py::arg("points") = 128,
      py::arg("noise_sigma") = 0.02, py::arg("seed") = 42, py::arg("split") = "train");
  m.def("load_dataset", [](const std::filesystem::path& path, bool normalize) {
        return dataset_dict(load_dataset(path, normalize));
      },
      py::arg("path"), py::arg("normalize") = true);
  m.def("save_dataset", [](const std::filesystem::path& path, const py::list& clouds,
                           const std::vector<std::int64_t>& labels, const std::vector<std::string>& class_names) {
        save_dataset(dataset_from(clouds, labels, class_names, "train"), path);
      },
      py::arg("path"), py::arg("clouds"), py::arg("labels"), py::arg("class_names"));

  // Verification and the command line.
  m.def("gradcheck", [](std::uint64_t seed, double tolerance) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& c : run_gradcheck_suite(seed, tolerance)) out.emplace_back(c.name, c.report.max_relative_error);
        return out;
      },
      py::arg("seed") = 42, py::arg("tolerance") = 1e-4,
      "Runs the 64-bit finite-difference suite; returns (case, max relative error) pairs.");
  m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a `pmt` subcommand in-process; returns (exit code, stdout, stderr).");
}
