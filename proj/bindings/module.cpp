// Python bindings. The surface mirrors the CLI: load a dataset, split,
// fit a calibrator, evaluate, plus the benchmark/theory/toy drivers that
// return their reports as JSON strings.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ambical/annotators.hpp"
#include "ambical/calibrators.hpp"
#include "ambical/core.hpp"
#include "ambical/errors.hpp"
#include "ambical/harness.hpp"
#include "ambical/metrics.hpp"
#include "ambical/toy.hpp"
#include "ambical/version.hpp"

namespace py = pybind11;

namespace {

using ambical::LogitDataset;

const ambical::LabeledExample& example_at(const LogitDataset& ds, int i) {
  if (i < 0 || i >= ds.size()) throw py::index_error("example index out of range");
  return ds.examples[static_cast<std::size_t>(i)];
}

std::vector<int> check_indices(const LogitDataset& ds,
                               const std::optional<std::vector<int>>& idx) {
  if (!idx) {
    std::vector<int> all(static_cast<std::size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  for (int i : *idx)
    if (i < 0 || i >= ds.size())
      throw ambical::InputError("example index " + std::to_string(i) +
                                " out of range for dataset of size " +
                                std::to_string(ds.size()));
  return *idx;
}

std::optional<double> model_temperature(const ambical::cal::CalibratorModel& m) {
  if (m.kind != ambical::cal::CalibratorKind::temperature) return std::nullopt;
  return std::get<ambical::cal::TemperatureParams>(m.params).t;
}

py::dict reliability_dict(const ambical::metrics::ReliabilityBins& r) {
  py::dict d;
  d["edges"] = r.edges;
  d["count"] = r.count;
  d["conf"] = r.mean_conf;
  d["acc"] = r.mean_acc;
  d["gap"] = r.gap;
  return d;
}

py::dict evaluate_impl(const LogitDataset& ds,
                       const std::optional<ambical::cal::CalibratorModel>& model,
                       const std::optional<std::vector<int>>& indices, int s,
                       std::uint64_t seed, int bins) {
  auto idx = check_indices(ds, indices);
  if (model && model->k != 0 && model->k != ds.k)
    throw ambical::InputError("model expects k=" + std::to_string(model->k) +
                              " classes, dataset has k=" + std::to_string(ds.k));
  std::vector<ambical::Distribution> probs, pi;
  std::vector<int> voted;
  probs.reserve(idx.size());
  pi.reserve(idx.size());
  voted.reserve(idx.size());
  for (int i : idx) {
    const auto& ex = ds.examples[static_cast<std::size_t>(i)];
    probs.push_back(model ? ambical::cal::apply(*model, ex.logits)
                          : ambical::softmax_t(ex.logits, 1.0));
    pi.push_back(ex.pi_hat);
    voted.push_back(ex.voted);
  }
  ambical::metrics::McConfig mc{s, seed, bins};
  auto rep = ambical::metrics::compute_report(probs, pi, voted, mc);

  py::dict d;
  d["n"] = static_cast<int>(idx.size());
  d["ece_true"] = rep.ece_true;
  d["aece_true"] = rep.aece_true;
  d["cwece_true"] = rep.cwece_true;
  d["ece_voted"] = rep.ece_voted;
  d["brier"] = rep.brier;
  d["nll"] = rep.nll;
  d["ece_true_stderr"] = rep.ece_true_stderr;
  if (model) {
    auto t = model_temperature(*model);
    d["t"] = t ? py::cast(*t) : py::none();
  } else {
    d["t"] = py::none();
  }
  d["reliability"] = reliability_dict(rep.reliability);
  return d;
}

}  // namespace

PYBIND11_MODULE(_ambical, m) {
  m.doc() = "ambiguity-aware confidence calibration";
  m.attr("__version__") = ambical::kVersion;

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ambical::Error& e) {
      std::string msg = e.kind() + ": " + e.what();
      if (e.kind() == "io")
        PyErr_SetString(PyExc_OSError, msg.c_str());
      else if (e.kind() == "optimization")
        PyErr_SetString(PyExc_RuntimeError, msg.c_str());
      else
        PyErr_SetString(PyExc_ValueError, msg.c_str());
    }
  });

  py::class_<LogitDataset>(m, "Dataset")
      .def_readonly("k", &LogitDataset::k)
      .def_readonly("class_names", &LogitDataset::class_names)
      .def("__len__", &LogitDataset::size)
      .def("id", [](const LogitDataset& d, int i) { return example_at(d, i).id; })
      .def("logits",
           [](const LogitDataset& d, int i) {
             return example_at(d, i).logits.values();
           })
      .def("pi",
           [](const LogitDataset& d, int i) {
             return example_at(d, i).pi_hat.probs();
           })
      .def("annotations",
           [](const LogitDataset& d, int i) -> std::optional<std::vector<int>> {
             const auto& ex = example_at(d, i);
             if (!ex.annotations) return std::nullopt;
             return ex.annotations->labels;
           })
      .def("voted", [](const LogitDataset& d, int i) { return example_at(d, i).voted; })
      .def("to_string", &ambical::harness::dataset_to_string)
      .def("save",
           [](const LogitDataset& d, const std::string& path) {
             ambical::harness::save_dataset(d, path);
           },
           py::arg("path"))
      .def("__repr__", [](const LogitDataset& d) {
        return "<ambical.Dataset n=" + std::to_string(d.size()) +
               " k=" + std::to_string(d.k) + ">";
      });

  py::class_<ambical::cal::CalibratorModel>(m, "Model")
      .def_property_readonly("kind",
                             [](const ambical::cal::CalibratorModel& mdl) {
                               return std::string(ambical::cal::kind_name(mdl.kind));
                             })
      .def_property_readonly("fitted_on",
                             [](const ambical::cal::CalibratorModel& mdl) {
                               return std::string(
                                   ambical::cal::fitted_on_name(mdl.fitted_on));
                             })
      .def_readonly("k", &ambical::cal::CalibratorModel::k)
      .def_property_readonly("t", &model_temperature,
                             "Fitted temperature, None for non-temperature kinds.")
      .def("apply_logits",
           [](const ambical::cal::CalibratorModel& mdl, std::vector<double> z) {
             return ambical::cal::apply(mdl, ambical::LogitVector(std::move(z)))
                 .probs();
           },
           py::arg("logits"))
      .def("apply",
           [](const ambical::cal::CalibratorModel& mdl, const LogitDataset& ds) {
             if (mdl.k != 0 && mdl.k != ds.k)
               throw ambical::InputError(
                   "model expects k=" + std::to_string(mdl.k) +
                   " classes, dataset has k=" + std::to_string(ds.k));
             std::vector<std::vector<double>> out;
             out.reserve(ds.examples.size());
             for (const auto& ex : ds.examples)
               out.push_back(ambical::cal::apply(mdl, ex.logits).probs());
             return out;
           },
           py::arg("dataset"), "Calibrated probabilities for every example.")
      .def("to_json", &ambical::cal::model_to_json)
      .def_static("from_json", &ambical::cal::model_from_json, py::arg("text"))
      .def("__repr__", [](const ambical::cal::CalibratorModel& mdl) {
        std::string r = "<ambical.Model kind=";
        r += ambical::cal::kind_name(mdl.kind);
        if (auto t = model_temperature(mdl)) r += " t=" + std::to_string(*t);
        return r + ">";
      });

  m.def("load_dataset", &ambical::harness::load_dataset, py::arg("path"));
  m.def("dataset_from_string", &ambical::harness::dataset_from_string,
        py::arg("text"));

  m.def(
      "split",
      [](const LogitDataset& ds, double cal_fraction, std::uint64_t seed,
         bool stratify) {
        auto s = ambical::harness::split_stratified(ds, cal_fraction, seed, stratify);
        return py::make_tuple(s.cal, s.test);
      },
      py::arg("dataset"), py::arg("cal_fraction") = 0.5, py::arg("seed") = 42,
      py::arg("stratify") = true,
      "Stratified calibration/test split; returns (cal_indices, test_indices).");

  m.def(
      "fit",
      [](const LogitDataset& ds, const std::string& method,
         const std::optional<std::vector<int>>& cal,
         const std::optional<std::vector<int>>& test, std::uint64_t seed,
         int mcts_s, double lsts_eps, double dirichlet_lambda, double ats_lambda) {
        auto mtd = ambical::harness::method_from_name(method);
        auto cal_idx = check_indices(ds, cal);
        auto test_idx = test ? check_indices(ds, test) : cal_idx;
        ambical::harness::MethodParams params;
        params.mcts_s = mcts_s;
        params.lsts_fixed_eps = lsts_eps;
        params.dirichlet_lambda = dirichlet_lambda;
        params.ats_lambda = ats_lambda;
        return ambical::harness::fit_method(mtd, ds, cal_idx, test_idx, params, seed);
      },
      py::arg("dataset"), py::arg("method"), py::arg("cal") = py::none(),
      py::arg("test") = py::none(), py::arg("seed") = 42, py::arg("mcts_s") = 1,
      py::arg("lsts_eps") = 0.1, py::arg("dirichlet_lambda") = 1e-3,
      py::arg("ats_lambda") = 1e-3,
      "Fit one method on the given calibration indices (default: the whole "
      "dataset). oracle_ts fits on the test indices instead.");

  m.def("method_names", [] {
    std::vector<std::string> names;
    for (auto mtd : ambical::harness::default_methods())
      names.emplace_back(ambical::harness::method_name(mtd));
    return names;
  });

  m.def("evaluate", &evaluate_impl, py::arg("dataset"),
        py::arg("model") = py::none(), py::arg("indices") = py::none(),
        py::arg("s") = 100, py::arg("seed") = 42, py::arg("bins") = 15,
        "Calibration metrics for a model (None = raw softmax) on the given "
        "indices (None = all).");

  m.def(
      "simulate_annotations",
      [](const LogitDataset& ds, const std::string& confusion, int m_annotators,
         std::uint64_t seed) {
        auto cm = ambical::harness::resolve_confusion(confusion);
        return ambical::harness::resample_annotations(ds, cm, m_annotators, seed);
      },
      py::arg("dataset"), py::arg("confusion") = "isic", py::arg("m") = 9,
      py::arg("seed") = 42,
      "Replace annotations with m draws from a confusion matrix ('isic' or a "
      "JSON file path) applied to each voted label.");

  m.def(
      "benchmark",
      [](const LogitDataset& ds, const std::string& config_json, int threads) {
        auto cfg = ambical::harness::config_from_json(config_json);
        auto report = ambical::harness::run_benchmark(ds, cfg, threads);
        return ambical::harness::benchmark_to_json(report);
      },
      py::arg("dataset"), py::arg("config_json"), py::arg("threads") = 1,
      py::call_guard<py::gil_scoped_release>(),
      "Run a benchmark grid described by a config JSON string; returns the "
      "report as JSON.");

  m.def(
      "check_theory",
      [](const LogitDataset& ds, const std::string& config_json, int threads,
         int bins, double spearman_threshold) {
        auto cfg = ambical::harness::config_from_json(config_json);
        cfg.methods = {ambical::harness::Method::ts, ambical::harness::Method::slts};
        auto report = ambical::harness::run_benchmark(ds, cfg, threads);
        auto check = ambical::harness::check_propositions(report, ds, bins,
                                                          spearman_threshold);
        return ambical::harness::theory_to_json(check);
      },
      py::arg("dataset"), py::arg("config_json"), py::arg("threads") = 1,
      py::arg("bins") = 10, py::arg("spearman_threshold") = 0.9,
      py::call_guard<py::gil_scoped_release>(),
      "Temperature-ordering and error-monotonicity checks; returns JSON.");

  m.def(
      "run_toy",
      [](std::uint64_t seed, int n_per_cluster, int hidden, int epochs, double lr,
         int mc_s, std::uint64_t mc_seed, int bins) {
        ambical::toy::ToyConfig cfg;
        cfg.n_per_cluster = n_per_cluster;
        cfg.hidden = hidden;
        cfg.epochs = epochs;
        cfg.learning_rate = lr;
        cfg.data_seed = seed;
        cfg.label_seed = seed + 1;
        cfg.train_seed = seed + 2;
        cfg.mc = ambical::metrics::McConfig{mc_s, mc_seed, bins};
        auto report = ambical::toy::run_toy_experiment(cfg);
        return ambical::toy::toy_report_to_json(report);
      },
      py::arg("seed") = 1, py::arg("n_per_cluster") = 2000, py::arg("hidden") = 64,
      py::arg("epochs") = 200, py::arg("lr") = 0.1, py::arg("mc_s") = 100,
      py::arg("mc_seed") = 42, py::arg("bins") = 15,
      py::call_guard<py::gil_scoped_release>(),
      "Three-cluster synthetic experiment; returns the report as JSON.");

  m.def(
      "softmax",
      [](std::vector<double> z, double t) {
        return ambical::softmax_t(ambical::LogitVector(std::move(z)), t).probs();
      },
      py::arg("logits"), py::arg("t") = 1.0);

  m.def(
      "entropy",
      [](std::vector<double> p) {
        return ambical::entropy(ambical::Distribution(std::move(p)));
      },
      py::arg("probs"));

  m.def(
      "ece_binned",
      [](const std::vector<double>& confidence, const std::vector<int>& correct,
         int bins, const std::string& scheme) {
        ambical::metrics::BinScheme sch;
        if (scheme == "equal_width")
          sch = ambical::metrics::BinScheme::equal_width;
        else if (scheme == "equal_mass")
          sch = ambical::metrics::BinScheme::equal_mass;
        else
          throw ambical::InputError("unknown bin scheme '" + scheme + "'");
        return ambical::metrics::ece_binned(confidence, correct, bins, sch).ece;
      },
      py::arg("confidence"), py::arg("correct"), py::arg("bins") = 15,
      py::arg("scheme") = "equal_width");

  m.def("spearman", &ambical::metrics::spearman, py::arg("a"), py::arg("b"));
}
