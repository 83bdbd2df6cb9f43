#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>

#include "fbcl/closed_loop.hpp"
#include "fbcl/errors.hpp"
#include "fbcl/feedback.hpp"
#include "fbcl/flux.hpp"
#include "fbcl/lyapunov.hpp"
#include "fbcl/oracle.hpp"
#include "fbcl/scenario.hpp"
#include "fbcl/solver.hpp"

namespace py = pybind11;
using namespace fbcl;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

// Python callables are invoked from worker threads in some drivers, so every
// entry point that can block releases the GIL; pybind11 reacquires it around
// each callback.
using release = py::call_guard<py::gil_scoped_release>;

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conservation laws closed by nonlocal boundary feedback";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<CertificateError>(m, "CertificateError", base.ptr());
  py::register_exception<CflError>(m, "CflError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<DepthError>(m, "DepthError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  // flux
  py::class_<Flux>(m, "Flux")
      .def_static("linear", [](double s, std::pair<double, double> d) { return Flux::linear(s, {d.first, d.second}); },
                  py::arg("speed"), py::arg("domain") = std::pair{-100.0, 100.0})
      .def_static("burgers_shifted", [](double c, std::pair<double, double> d) { return Flux::burgers_shifted(c, {d.first, d.second}); },
                  py::arg("offset"), py::arg("domain") = std::pair{0.0, 1.0})
      .def_static("quadratic_plus_one", [](std::pair<double, double> d) { return Flux::quadratic_plus_one({d.first, d.second}); },
                  py::arg("domain") = std::pair{1.0, 1000.0})
      .def_static("concave_sat", [](double l, double b, std::pair<double, double> d) { return Flux::concave_sat(l, b, {d.first, d.second}); },
                  py::arg("lam"), py::arg("beta"), py::arg("domain") = std::pair{-10.0, 10.0})
      .def_static("polynomial", [](std::vector<double> c, std::pair<double, double> d) { return Flux::polynomial(std::move(c), {d.first, d.second}); },
                  py::arg("coeffs"), py::arg("domain"))
      .def_static("truncated", &Flux::truncated, py::arg("inner"), py::arg("bound"))
      .def("__call__", &Flux::operator())
      .def("derivative", &Flux::derivative)
      .def_property_readonly("a_lower", &Flux::a_lower)
      .def_property_readonly("lip_const", &Flux::lip_const)
      .def_property_readonly("domain", [](const Flux& f) { return std::pair{f.domain().lo, f.domain().hi}; })
      .def_property_readonly("tag", &Flux::tag);
  m.def("godunov_flux", &godunov_flux);
  py::class_<HTransform>(m, "HTransform").def("__call__", &HTransform::operator());
  m.def("h_transform", &h_transform);

  // feedback
  py::class_<ScalarMap>(m, "ScalarMap")
      .def_static("linear", &ScalarMap::linear)
      .def_static("tanh", &ScalarMap::tanh)
      .def_static("saturation", &ScalarMap::saturation)
      .def_static("table", &ScalarMap::table)
      .def("__call__", &ScalarMap::operator());
  py::class_<FeedbackMap>(m, "FeedbackMap")
      .def_static("linear", &FeedbackMap::linear)
      .def_static("componentwise", &FeedbackMap::componentwise)
      .def("__call__", &FeedbackMap::operator())
      .def_property_readonly("lip_const", &FeedbackMap::lip_const)
      .def("jacobian_at_zero", &FeedbackMap::jacobian_at_zero);
  py::enum_<Norm>(m, "Norm").value("L1", Norm::L1).value("Linf", Norm::Linf);
  py::class_<Box>(m, "Box")
      .def(py::init([](Eigen::VectorXd lo, Eigen::VectorXd hi) { return Box{std::move(lo), std::move(hi)}; }))
      .def_static("symmetric", &Box::symmetric);
  py::class_<Certificate>(m, "Certificate")
      .def_property_readonly("passed", &Certificate::passed)
      .def_readonly("witness", &Certificate::witness)
      .def_readonly("min_margin", &Certificate::min_margin)
      .def("to_dict", [](const Certificate& c) { return to_py(to_json(c)); });
  m.def("check_condstab", [](const std::vector<Flux>& f, const FeedbackMap& G, const Eigen::VectorXd& p, double mu,
                             const Box& box, std::size_t samples) { return check_condstab(f, G, p, mu, box, samples); },
        py::arg("fluxes"), py::arg("G"), py::arg("p"), py::arg("mu"), py::arg("box"), py::arg("samples") = 4096);
  m.def("check_weighted_contraction", &check_weighted_contraction, py::arg("G"), py::arg("delta"), py::arg("mu"),
        py::arg("norm"), py::arg("box"), py::arg("samples") = 4096);
  m.def("rho_p", [](const Eigen::MatrixXd& K, Norm p) {
    const RhoResult r = rho_p(K, p);
    return py::make_tuple(r.value, r.scaling);
  });
  m.def("corollary_rate_bound", [](const std::vector<Flux>& f, const FeedbackMap& G) { return corollary_rate_bound(f, G); });

  // solver
  py::class_<Grid>(m, "Grid")
      .def_static("make", &Grid::make, py::arg("n_cells"), py::arg("cfl") = 0.9)
      .def_readonly("n_cells", &Grid::n_cells)
      .def_readonly("dx", &Grid::dx)
      .def_readonly("cfl", &Grid::cfl);
  py::class_<GridState>(m, "GridState")
      .def_readonly("t", &GridState::t)
      .def_readonly("values", &GridState::values)
      .def_static("from_functions", &GridState::from_functions, py::arg("u0"), py::arg("grid"), py::arg("sub") = 8)
      .def_static("constant", &GridState::constant);
  py::class_<TraceSeries>(m, "TraceSeries")
      .def_readonly("times", &TraceSeries::times)
      .def_readonly("inflow", &TraceSeries::inflow)
      .def_readonly("outflow", &TraceSeries::outflow);
  py::class_<RunOptions>(m, "RunOptions")
      .def(py::init<>())
      .def_readwrite("fixed_dt", &RunOptions::fixed_dt)
      .def_readwrite("snapshot_stride", &RunOptions::snapshot_stride)
      .def_readwrite("keep_trajectory", &RunOptions::keep_trajectory)
      .def_readwrite("check_max_principle", &RunOptions::check_max_principle);
  py::class_<RunResult>(m, "RunResult")
      .def_readonly("trajectory", &RunResult::trajectory)
      .def_readonly("traces", &RunResult::traces)
      .def_readonly("final_state", &RunResult::final_state)
      .def_readonly("dts", &RunResult::dts)
      .def_readonly("max_principle_excess", &RunResult::max_principle_excess);
  m.def("run_open_loop", [](const std::vector<Flux>& f, const GridState& u0, const Inflow& w, double T, const Grid& g,
                            const RunOptions& o) { return run_open_loop(f, u0, w, T, g, o); },
        py::arg("fluxes"), py::arg("u0"), py::arg("w"), py::arg("T"), py::arg("grid"), py::arg("options") = RunOptions{}, release());
  m.def("l1_distance", &l1_distance);

  // closed loop
  py::class_<ClosedLoopRun>(m, "ClosedLoopRun")
      .def_readonly("run", &ClosedLoopRun::run)
      .def_readonly("feedback_residual", &ClosedLoopRun::feedback_residual)
      .def_property_readonly("final_state", &ClosedLoopRun::final_state)
      .def_property_readonly("traces", &ClosedLoopRun::traces);
  m.def("run_direct", [](const std::vector<Flux>& f, const FeedbackMap& G, const GridState& u0, double T, const Grid& g,
                         int stride) {
    ClosedLoopOptions o;
    o.run.snapshot_stride = stride;
    return run_direct(f, G, u0, T, g, o);
  }, py::arg("fluxes"), py::arg("G"), py::arg("u0"), py::arg("T"), py::arg("grid"), py::arg("snapshot_stride") = 1, release());
  m.def("run_method_of_steps", [](const std::vector<Flux>& f, const FeedbackMap& G, const GridState& u0, double T,
                                  const Grid& g, std::optional<Inflow> dummy) {
    return run_method_of_steps(f, G, u0, T, g, dummy ? *dummy : zero_inflow(u0.components()));
  }, py::arg("fluxes"), py::arg("G"), py::arg("u0"), py::arg("T"), py::arg("grid"), py::arg("dummy") = py::none(), release());
  m.def("delay_independence_test", [](const std::vector<Flux>& f, const GridState& u0, const Inflow& w, const Inflow& z,
                                      double t_tilde, const Grid& g, double window_fraction) {
    DelayTestOptions o;
    o.window_fraction = window_fraction;
    const DelayTestResult r = delay_independence_test(f, u0, w, z, t_tilde, g, o);
    return std::map<std::string, double>{
        {"a_bar", r.a_bar}, {"delta_bar", r.delta_bar}, {"window_end", r.window_end}, {"deviation", r.deviation}};
  }, py::arg("fluxes"), py::arg("u0"), py::arg("w"), py::arg("z"), py::arg("t_tilde"), py::arg("grid"),
        py::arg("window_fraction") = 1.0, release());
  m.def("detect_blowup", [](double c, double M, double T, const Grid& g, double gain) {
    BlowupOptions o;
    o.gain = gain;
    const BlowupResult r = detect_blowup(c, M, T, g, o);
    return r.t_blow;
  }, py::arg("c"), py::arg("M"), py::arg("T"), py::arg("grid"), py::arg("gain") = 2.0, release());

  // lyapunov
  m.def("v_l1", &v_l1);
  m.def("v_linf", &v_linf);
  m.def("v_l2m", &v_l2m);
  m.def("fit_decay", [](const std::vector<double>& t, const std::vector<double>& v, double lo, double hi) {
    const DecayFit f = fit_decay(t, v, lo, hi);
    return py::make_tuple(f.slope, f.r2);
  });

  // oracle
  auto o = m.def_submodule("oracle", "Independent reference solutions");
  o.def("exact_linear_eval", [](const Eigen::VectorXd& lambda, const Eigen::MatrixXd& K,
                                std::vector<std::function<double(double)>> u0, double t, double x) {
    oracle::LinearClosedLoopSpec s{lambda, K, std::move(u0)};
    return oracle::exact_linear_eval(s, t, x);
  });
  o.def("brute_force_rho", [](const Eigen::MatrixXd& K, Norm p) { return oracle::brute_force_rho(K, p); });
  o.def("spectral_radius_abs", &oracle::spectral_radius_abs);
  o.def("riemann_exact", &oracle::riemann_exact, py::arg("f"), py::arg("uL"), py::arg("uR"), py::arg("t"), py::arg("x"),
        py::arg("x0") = 0.0);

  // scenarios
  m.def("run_scenario", [](const std::string& path, const std::string& out_dir) {
    Outcome out;
    {
      py::gil_scoped_release nogil;
      out = run_scenario(load_scenario(path), out_dir);
    }
    return py::make_tuple(out.exit_code, to_py(out.report));
  }, py::arg("config"), py::arg("out_dir"));
  m.def("certify", [](const std::string& path) {
    Outcome out;
    {
      py::gil_scoped_release nogil;
      out = certify_scenario(load_scenario(path));
    }
    return py::make_tuple(out.exit_code, to_py(out.report));
  });
}
