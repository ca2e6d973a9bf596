#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "migrasim/analytic.hpp"
#include "migrasim/cli.hpp"
#include "migrasim/conservation.hpp"
#include "migrasim/couplings.hpp"
#include "migrasim/fixed_point.hpp"
#include "migrasim/network.hpp"
#include "migrasim/reactor.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace migrasim;

namespace {

py::dict to_dict(const IdentityCheck& c) {
  return py::dict("name"_a = c.name, "lhs"_a = c.lhs.value, "rhs"_a = c.rhs.value,
                  "residual"_a = c.residual.value, "se"_a = c.residual.std_error, "pass"_a = c.pass);
}

py::list to_list(const std::vector<IdentityCheck>& checks) {
  py::list out;
  for (const auto& c : checks) out.append(to_dict(c));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Simulation and analysis of migration-contagion processes";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<CouplingViolation>(m, "CouplingViolation", PyExc_RuntimeError);

  py::class_<ModelParams>(m, "ModelParams")
      .def_readonly("lambda_", &ModelParams::lambda)
      .def_readonly("mu", &ModelParams::mu)
      .def_readonly("alpha", &ModelParams::alpha)
      .def_readonly("beta", &ModelParams::beta)
      .def_readonly("nu", &ModelParams::nu)
      .def_readonly("p", &ModelParams::p)
      .def_readonly("q", &ModelParams::q)
      .def_readonly("eta", &ModelParams::eta)
      .def("with_p", &ModelParams::with_p)
      .def("__repr__", [](const ModelParams& p) {
        std::ostringstream os;
        os << "ModelParams(lambda=" << p.lambda << ", mu=" << p.mu << ", alpha=" << p.alpha
           << ", beta=" << p.beta << ", nu=" << p.nu << ", p=" << p.p << ")";
        return os.str();
      });

  m.def("derive_params", &derive_params, "lambda_"_a, "mu"_a, "alpha"_a, "beta"_a, "p"_a,
        "nu"_a = py::none());
  m.def("params_from_density", &params_from_density, "eta"_a, "mu"_a, "alpha"_a, "beta"_a,
        "p"_a = 0.0);

  py::class_<Estimate>(m, "Estimate")
      .def_readonly("value", &Estimate::value)
      .def_readonly("std_error", &Estimate::std_error)
      .def_readonly("n", &Estimate::n)
      .def_readonly("ci_level", &Estimate::ci_level)
      .def_property_readonly("lower", &Estimate::lower)
      .def_property_readonly("upper", &Estimate::upper)
      .def("ci_contains", &Estimate::ci_contains)
      .def("__repr__", [](const Estimate& e) {
        std::ostringstream os;
        os << "Estimate(" << e.value << " +- " << e.std_error << ", n=" << e.n << ")";
        return os.str();
      });

  // closed forms
  m.def("air_threshold", &air_threshold, "alpha"_a, "beta"_a);
  m.def("docs_tl_threshold", &docs_tl_threshold, "mu"_a, "alpha"_a, "beta"_a);
  m.def("sis_threshold_bounds", [](double mu, double alpha, double beta) {
    const auto b = sis_threshold_bounds(mu, alpha, beta);
    return py::dict("lower"_a = b.lower, "upper"_a = b.upper, "kappa"_a = b.kappa);
  }, "mu"_a, "alpha"_a, "beta"_a);
  m.def("docs_mean_x", &docs_mean_x, "params"_a);
  m.def("docs_tl_rhs", &docs_tl_rhs, "p"_a, "params"_a);
  m.def("docs_tl_rhs_slope0", &docs_tl_rhs_slope0, "params"_a);
  m.def("docs_tl_fixed_point", [](const ModelParams& p) { return docs_tl_fixed_point(p).p_star; },
        "params"_a);
  m.def("p_star_upper_bound", &p_star_upper_bound, "params"_a);

  // simulation
  m.def("simulate_moments", [](const ModelParams& p, const std::string& variant, double horizon,
                               std::uint64_t seed) {
    SimulationOptions o;
    o.horizon = horizon;
    const auto kind = parse_variant(variant) == ReactorVariant::docs ? ReactorKind::docs()
                                                                     : ReactorKind::sis();
    const auto r = simulate_reactor(kind, p, o, {seed, 0});
    return py::dict("mean_x"_a = r.moment(1, 0), "mean_y"_a = r.moment(0, 1),
                    "events"_a = r.events);
  }, "params"_a, "variant"_a = "sis", "horizon"_a = 1e4, "seed"_a = 1);
  m.def("estimate_g", [](double p, const ModelParams& params, std::uint64_t n, std::uint64_t seed) {
    return estimate_g(p, params, n, {seed, 0}).p_out;
  }, "p"_a, "params"_a, "n_cycles"_a = 100000, "seed"_a = 1);
  m.def("estimate_g_prime0", [](const ModelParams& params, std::uint64_t budget, std::uint64_t seed) {
    return estimate_g_prime0(params, DerivativeMethod::excursion, budget, {seed, 0});
  }, "params"_a, "budget"_a = 100000, "seed"_a = 1);
  m.def("find_p_star", [](const ModelParams& params, std::uint64_t n_cycles, std::uint64_t seed) {
    PStarOptions o;
    o.n_cycles = n_cycles;
    return find_p_star(params, o, {seed, 0}).p_star;
  }, "params"_a, "n_cycles"_a = 100000, "seed"_a = 1);
  m.def("median_extinction_time", [](std::size_t stations, double eta, const ModelParams& params,
                                     std::size_t reps, double cap, std::uint64_t seed) {
    return extinction_time(ReactorVariant::sis, stations, customers_for_density(eta, stations),
                           params, reps, cap, {seed, 0})
        .median();
  }, "stations"_a, "eta"_a, "params"_a, "reps"_a = 5, "cap"_a = 1e5, "seed"_a = 1);

  // audits and couplings
  m.def("audit_sis", [](const ModelParams& p, double horizon, std::uint64_t seed) {
    return to_list(audit_sis(p, horizon, {seed, 0}));
  }, "params"_a, "horizon"_a, "seed"_a = 1);
  m.def("audit_docs", [](const ModelParams& p, double horizon, std::uint64_t seed) {
    return to_list(audit_docs(p, horizon, {seed, 0}));
  }, "params"_a, "horizon"_a, "seed"_a = 1);
  m.def("coupled_p_monotonicity", [](double p, double p_hat, const ModelParams& params,
                                     std::uint64_t cycles, std::uint64_t seed) {
    const auto s = coupled_p_monotonicity(p, p_hat, params, cycles, {seed, 0});
    return py::dict("cycles"_a = s.cycles, "violations"_a = s.violations, "strict"_a = s.strict,
                    "low"_a = s.low, "high"_a = s.high);
  }, "p"_a, "p_hat"_a, "params"_a, "cycles"_a = 10000, "seed"_a = 1);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, "args"_a, "Run the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
