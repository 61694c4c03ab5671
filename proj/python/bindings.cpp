#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "medsens/biprobit.hpp"
#include "medsens/datamodel.hpp"
#include "medsens/effects.hpp"
#include "medsens/error.hpp"
#include "medsens/numkernel.hpp"
#include "medsens/probit.hpp"
#include "medsens/sensitivity.hpp"
#include "medsens/simgen.hpp"

namespace py = pybind11;
using namespace medsens;

namespace {

ConfoundingKind kind_of(const std::string& s) { return parse_confounding_kind(s); }

EffectScope scope_of(const std::optional<Eigen::VectorXd>& profile, const std::string& label) {
  if (!profile) return EffectScope::marginal();
  return EffectScope::conditional(CovariateProfile{*profile, label});
}

py::dict probit_dict(const ProbitFit& f) {
  py::dict d;
  d["coefficients"] = f.coefficients;
  d["covariance"] = f.covariance;
  d["std_errors"] = Eigen::VectorXd(f.std_errors());
  d["terms"] = f.terms;
  d["loglik"] = f.loglik;
  d["gradient_norm"] = f.gradient_norm;
  d["iterations"] = f.iterations;
  d["converged"] = f.converged;
  return d;
}

py::dict estimate_dict(const EffectEstimate& e) {
  py::dict d;
  d["effect"] = std::string(to_string(e.effect_type));
  d["marginal"] = e.marginal;
  d["scope"] = e.scope_label;
  d["estimate"] = e.estimate;
  d["std_error"] = e.std_error;
  d["ci_lower"] = e.ci_lower;
  d["ci_upper"] = e.ci_upper;
  d["alpha"] = e.alpha;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Probit causal mediation effects and correlation sensitivity analysis";

  // Translators run most-recent first, so the base class is registered before its subclasses.
  auto& base = py::register_exception<Error>(m, "MedsensError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<RankError>(m, "RankError", base.ptr());
  py::register_exception<SeparationError>(m, "SeparationError", base.ptr());
  py::register_exception<NotConvergedError>(m, "NotConvergedError", base.ptr());
  py::register_exception<ScanError>(m, "ScanError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());

  m.def("norm_cdf", &norm_cdf);
  m.def("norm_quantile", &norm_quantile);
  m.def("binorm_cdf", py::overload_cast<double, double, double>(&binorm_cdf), py::arg("a"), py::arg("b"),
        py::arg("rho"));

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_static("full", &ModelSpec::full)
      .def_static("main_effects", &ModelSpec::main_effects)
      .def("validate", &ModelSpec::validate)
      .def_property(
          "exposure_covariates", [](const ModelSpec& s) { return s.exposure.covariates; },
          [](ModelSpec& s, bool v) { s.exposure.covariates = v; })
      .def_property(
          "mediator_covariates", [](const ModelSpec& s) { return s.mediator.covariates; },
          [](ModelSpec& s, bool v) { s.mediator.covariates = v; })
      .def_property(
          "mediator_exposure_covariate", [](const ModelSpec& s) { return s.mediator.exposure_covariate; },
          [](ModelSpec& s, bool v) { s.mediator.exposure_covariate = v; })
      .def_property(
          "outcome_exposure_mediator", [](const ModelSpec& s) { return s.outcome.exposure_mediator; },
          [](ModelSpec& s, bool v) { s.outcome.exposure_mediator = v; })
      .def_property(
          "outcome_covariates", [](const ModelSpec& s) { return s.outcome.covariates; },
          [](ModelSpec& s, bool v) { s.outcome.covariates = v; })
      .def_property(
          "outcome_exposure_covariate", [](const ModelSpec& s) { return s.outcome.exposure_covariate; },
          [](ModelSpec& s, bool v) { s.outcome.exposure_covariate = v; })
      .def_property(
          "outcome_mediator_covariate", [](const ModelSpec& s) { return s.outcome.mediator_covariate; },
          [](ModelSpec& s, bool v) { s.outcome.mediator_covariate = v; })
      .def_property(
          "outcome_exposure_mediator_covariate",
          [](const ModelSpec& s) { return s.outcome.exposure_mediator_covariate; },
          [](ModelSpec& s, bool v) { s.outcome.exposure_mediator_covariate = v; });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<Eigen::VectorXd, Eigen::VectorXd, Eigen::VectorXd, Eigen::MatrixXd, std::vector<std::string>>(),
           py::arg("z"), py::arg("m"), py::arg("y"), py::arg("x"), py::arg("covariate_names"))
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("p", &Dataset::p)
      .def_property_readonly("z", &Dataset::z)
      .def_property_readonly("m", &Dataset::m)
      .def_property_readonly("y", &Dataset::y)
      .def_property_readonly("x", &Dataset::x)
      .def_property_readonly("covariate_names", &Dataset::covariate_names);

  m.def(
      "load_csv",
      [](const std::string& path, const std::string& exposure, const std::string& mediator,
         const std::string& outcome, const std::vector<std::string>& covariates) {
        ColumnRoles roles;
        roles.exposure = exposure;
        roles.mediator = mediator;
        roles.outcome = outcome;
        roles.covariates = covariates;
        LoadedData loaded = load_csv(path, roles);
        return py::make_tuple(loaded.data, loaded.dropped_rows);
      },
      py::arg("path"), py::arg("exposure") = "z", py::arg("mediator") = "m", py::arg("outcome") = "y",
      py::arg("covariates") = std::vector<std::string>{});

  m.def(
      "fit_models",
      [](const Dataset& ds, const ModelSpec& spec) {
        py::dict d;
        d["exposure"] = probit_dict(fit_probit(build_exposure_design(ds, spec), ds.z()));
        d["mediator"] = probit_dict(fit_probit(build_mediator_design(ds, spec), ds.m()));
        d["outcome"] = probit_dict(fit_probit(build_outcome_design(ds, spec), ds.y()));
        return d;
      },
      py::arg("data"), py::arg("spec") = ModelSpec::main_effects());

  m.def(
      "fit_constrained",
      [](const std::string& kind, double rho, const Dataset& ds, const ModelSpec& spec) {
        const ConstrainedFit f = fit_constrained(kind_of(kind), rho, ds, spec);
        py::dict d;
        d["kind"] = std::string(short_code(f.kind));
        d["rho"] = f.rho.value();
        d["coefficients_a"] = f.coefficients_a;
        d["coefficients_b"] = f.coefficients_b;
        d["covariance_full"] = f.covariance_full;
        d["terms_a"] = f.terms_a;
        d["terms_b"] = f.terms_b;
        d["loglik"] = f.loglik;
        d["iterations"] = f.iterations;
        d["converged"] = f.converged;
        d["warnings"] = f.warnings;
        return d;
      },
      py::arg("kind"), py::arg("rho"), py::arg("data"), py::arg("spec") = ModelSpec::main_effects());

  m.def(
      "effect",
      [](const std::string& type, const Dataset& ds, const ModelSpec& spec, double alpha,
         const std::optional<Eigen::VectorXd>& profile, const std::string& label) {
        const ProbitFit med = fit_probit(build_mediator_design(ds, spec), ds.m());
        const ProbitFit out = fit_probit(build_outcome_design(ds, spec), ds.y());
        FitContext ctx;
        ctx.spec = spec;
        ctx.beta = med.coefficients;
        ctx.sigma_beta = med.covariance;
        ctx.beta_converged = med.converged;
        ctx.theta = out.coefficients;
        ctx.sigma_theta = out.covariance;
        ctx.theta_converged = out.converged;
        return estimate_dict(effect_with_ci(parse_effect_type(type), scope_of(profile, label), ctx, ds.x(), alpha));
      },
      py::arg("effect"), py::arg("data"), py::arg("spec") = ModelSpec::main_effects(), py::arg("alpha") = 0.05,
      py::arg("profile") = std::nullopt, py::arg("label") = "profile");

  m.def(
      "effect_closed_form",
      [](const std::string& type, const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
         const Eigen::VectorXd& profile, const ModelSpec& spec) {
        return effect_conditional(parse_effect_type(type), theta, beta, CovariateProfile{profile, ""}, spec);
      },
      py::arg("effect"), py::arg("theta"), py::arg("beta"), py::arg("profile"),
      py::arg("spec") = ModelSpec::main_effects());

  m.def(
      "sensitivity_scan",
      [](const std::string& kind, const std::string& type, const Dataset& ds, const ModelSpec& spec,
         const std::string& grid, double alpha, bool refine) {
        const SensitivityScan scan = run_scan(kind_of(kind), parse_effect_type(type), EffectScope::marginal(),
                                              RhoGrid::parse(grid), ds, spec, alpha);
        py::list points;
        for (const auto& pt : scan.per_point) {
          py::dict d;
          d["rho"] = pt.rho;
          d["converged"] = pt.converged;
          if (pt.estimate) {
            d["estimate"] = pt.estimate->estimate;
            d["std_error"] = pt.estimate->std_error;
            d["ci_lower"] = pt.estimate->ci_lower;
            d["ci_upper"] = pt.estimate->ci_upper;
          } else {
            d["failure"] = pt.failure;
          }
          points.append(d);
        }
        const IntervalResult is = identification_set(scan);
        const IntervalResult ui = uncertainty_interval(scan);
        const SignRanges sr = sign_ranges(scan);
        py::list ranges;
        for (const auto& r : sr.ranges) {
          ranges.append(py::make_tuple(r.rho_lower, r.rho_upper, std::string(to_string(r.classification))));
        }
        py::list brackets;
        if (refine) {
          for (const auto& b : refine_boundary(scan)) {
            brackets.append(py::make_tuple(b.lower, b.upper, std::string(to_string(b.below)),
                                           std::string(to_string(b.above)), b.refined));
          }
        }
        py::dict d;
        d["points"] = points;
        d["identification_set"] = py::make_tuple(is.lower, is.upper);
        d["uncertainty_interval"] = py::make_tuple(ui.lower, ui.upper);
        d["sign_ranges"] = ranges;
        d["boundaries"] = brackets;
        return d;
      },
      py::arg("kind"), py::arg("effect"), py::arg("data"), py::arg("spec") = ModelSpec::main_effects(),
      py::arg("grid") = "-0.9:0.9:0.05", py::arg("alpha") = 0.05, py::arg("refine") = true);

  m.def(
      "simulate_scenario",
      [](const std::string& path, long long n, std::uint64_t seed) {
        const Scenario sc = load_scenario(path);
        const Dataset ds = simulate(sc.params, static_cast<Eigen::Index>(n), seed);
        py::dict truth;
        for (const auto& [t, v] : true_effects(sc.params, ds.x())) truth[py::str(std::string(to_string(t)))] = v;
        return py::make_tuple(ds, truth);
      },
      py::arg("scenario"), py::arg("n"), py::arg("seed") = 1);
}
