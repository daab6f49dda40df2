#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ltrcsimex/harness.hpp"
#include "ltrcsimex/io.hpp"
#include "ltrcsimex/simex.hpp"

namespace py = pybind11;
using namespace ltrcsimex;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Additive hazards variable selection under left truncation, "
            "right censoring, and covariate measurement error";

  py::register_exception<InvalidInputError>(m, "InvalidInputError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);

  py::class_<SubjectRecord>(m, "SubjectRecord")
      .def(py::init<>())
      .def_readwrite("y", &SubjectRecord::y)
      .def_readwrite("delta", &SubjectRecord::delta)
      .def_readwrite("a", &SubjectRecord::a)
      .def_readwrite("w", &SubjectRecord::w)
      .def_readwrite("z", &SubjectRecord::z);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("subjects", &Dataset::subjects)
      .def_readwrite("p_x", &Dataset::p_x)
      .def_readwrite("p_z", &Dataset::p_z)
      .def("validate", &Dataset::validate)
      .def("__len__", [](const Dataset& d) { return d.n(); });

  py::class_<Coefficients>(m, "Coefficients")
      .def(py::init<>())
      .def_readwrite("beta_x", &Coefficients::beta_x)
      .def_readwrite("beta_z", &Coefficients::beta_z);

  py::class_<StepFunction>(m, "StepFunction")
      .def(py::init<>())
      .def(py::init<std::vector<double>, std::vector<double>>())
      .def_readonly("times", &StepFunction::times)
      .def_readonly("values", &StepFunction::values)
      .def("__call__", &StepFunction::operator());

  py::class_<PluginSet>(m, "PluginSet")
      .def_readonly("cum_baseline", &PluginSet::cum_baseline)
      .def_readonly("bandwidth", &PluginSet::bandwidth)
      .def_readonly("trunc_dist", &PluginSet::trunc_dist);

  py::enum_<PenaltyFamily>(m, "PenaltyFamily")
      .value("LASSO", PenaltyFamily::LASSO)
      .value("ALASSO", PenaltyFamily::ALASSO)
      .value("SCAD", PenaltyFamily::SCAD);

  py::class_<PenaltySpec>(m, "PenaltySpec")
      .def(py::init<>())
      .def_readwrite("family", &PenaltySpec::family)
      .def_readwrite("tuning", &PenaltySpec::tuning)
      .def_readwrite("scad_a", &PenaltySpec::scad_a)
      .def_readwrite("alasso_gamma", &PenaltySpec::alasso_gamma);

  py::class_<ProfileFitOptions>(m, "ProfileFitOptions")
      .def(py::init<>())
      .def_readwrite("max_outer_iterations", &ProfileFitOptions::max_outer_iterations)
      .def_readwrite("beta_tolerance", &ProfileFitOptions::beta_tolerance);

  py::class_<SimexGrid>(m, "SimexGrid")
      .def(py::init<>())
      .def_readwrite("replicates", &SimexGrid::replicates)
      .def_readwrite("zetas", &SimexGrid::zetas)
      .def_readwrite("seed", &SimexGrid::seed);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("beta_hat", &FitResult::beta_hat)
      .def_readonly("selected_x", &FitResult::selected_x)
      .def_readonly("selected_z", &FitResult::selected_z)
      .def_readonly("zetas", &FitResult::zetas)
      .def_readonly("beta_by_zeta", &FitResult::beta_by_zeta)
      .def_readonly("lambda0_times", &FitResult::lambda0_times)
      .def_readonly("lambda0_values", &FitResult::lambda0_values)
      .def_readonly("trunc_ages", &FitResult::trunc_ages)
      .def_readonly("trunc_values", &FitResult::trunc_values)
      .def_readonly("converged_fraction", &FitResult::converged_fraction)
      .def("to_json", &FitResult::to_json);

  m.def("covariate_matrix", &covariate_matrix);
  m.def("breslow_baseline", &breslow_baseline);
  m.def("kernel_hazard", &kernel_hazard);
  m.def("select_bandwidth", &select_bandwidth);
  m.def("npmle_truncation", &npmle_truncation);
  m.def("compute_plugins", &compute_plugins);
  m.def("pseudo_loglik", &pseudo_loglik);
  m.def("pseudo_loglik_grad", &pseudo_loglik_grad);
  m.def("extrapolate", &extrapolate, py::arg("zetas"), py::arg("values"),
        py::arg("target") = -1.0);
  m.def("generate_pseudo_covariates", &generate_pseudo_covariates);
  m.def("naive_fit", &naive_fit, py::arg("data"), py::arg("penalty"),
        py::arg("options") = ProfileFitOptions{});
  m.def("simex_fit", &simex_fit, py::arg("data"), py::arg("sigma_eps"),
        py::arg("penalty"), py::arg("grid"),
        py::arg("options") = ProfileFitOptions{},
        py::arg("eval_times") = std::vector<double>{},
        py::arg("eval_ages") = std::vector<double>{}, py::arg("workers") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("model", &ScenarioConfig::model)
      .def_readwrite("n", &ScenarioConfig::n)
      .def_readwrite("p_x", &ScenarioConfig::p_x)
      .def_readwrite("p_z", &ScenarioConfig::p_z)
      .def_readwrite("sigma_eps_diag", &ScenarioConfig::sigma_eps_diag)
      .def_readwrite("target_censoring", &ScenarioConfig::target_censoring)
      .def_readwrite("replications", &ScenarioConfig::replications)
      .def_readwrite("penalties", &ScenarioConfig::penalties)
      .def_readwrite("simex", &ScenarioConfig::simex)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("workers", &ScenarioConfig::workers);

  py::class_<Metrics>(m, "Metrics")
      .def_readonly("l1", &Metrics::l1)
      .def_readonly("l2", &Metrics::l2)
      .def_readonly("num_selected", &Metrics::num_selected)
      .def_readonly("num_false_negative", &Metrics::num_false_negative);

  py::class_<StudyRow>(m, "StudyRow")
      .def_readonly("family", &StudyRow::family)
      .def_readonly("estimator", &StudyRow::estimator)
      .def_readonly("mean", &StudyRow::mean);

  py::class_<StudyResult>(m, "StudyResult")
      .def_readonly("rows", &StudyResult::rows)
      .def("to_csv", &StudyResult::to_csv)
      .def("to_table", &StudyResult::to_table);

  py::class_<GeneratedScenario>(m, "GeneratedScenario")
      .def_readonly("data", &GeneratedScenario::data)
      .def_readonly("true_x", &GeneratedScenario::true_x)
      .def_readonly("beta0", &GeneratedScenario::beta0);

  m.def("make_true_beta", &make_true_beta);
  m.def("build_covariance", &build_covariance, py::arg("p_x"), py::arg("p_z"),
        py::arg("sigma_x2") = 1.0, py::arg("sigma_z2") = 1.0, py::arg("rho") = 0.6);
  m.def("generate_scenario", &generate_scenario);
  m.def("evaluate", &evaluate);
  m.def("run_study", &run_study, py::call_guard<py::gil_scoped_release>());

  m.def("read_dataset_csv", &read_dataset_csv);
  m.def("write_dataset_csv", &write_dataset_csv);
  m.def("make_mimic_dataset", &make_mimic_dataset, py::arg("seed") = 20240501);
}
