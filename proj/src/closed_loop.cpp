#include "fbcl/closed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>

#include "fbcl/errors.hpp"

namespace fbcl {

SlabSchedule SlabSchedule::make(double tau, double T) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("slab length must be positive");
  if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("horizon must be finite and >= 0");
  SlabSchedule s;
  s.tau = tau;
  s.T = T;
  s.t.push_back(0.0);
  for (long k = 1; s.t.back() < T; ++k) s.t.push_back(std::min(static_cast<double>(k) * tau, T));
  return s;
}

Inflow zero_inflow(int n) { return constant_inflow(Eigen::VectorXd::Zero(n)); }

std::vector<double> feedback_residual(const TraceSeries& traces, const FeedbackMap& G) {
  std::vector<double> r;
  r.reserve(traces.size());
  for (std::size_t k = 0; k < traces.size(); ++k) {
    r.push_back((traces.inflow[k] - G(traces.outflow[k])).lpNorm<Eigen::Infinity>());
  }
  return r;
}

namespace {

void check_loop(std::span<const Flux> fluxes, const FeedbackMap& G, const GridState& u0) {
  if (G.size() != u0.components() || static_cast<int>(fluxes.size()) != G.size()) {
    throw DimensionError("fluxes, feedback and initial state disagree on n");
  }
}

}  // namespace

ClosedLoopRun run_direct(std::span<const Flux> fluxes, const FeedbackMap& G,
                         const GridState& u0, double T, const Grid& grid,
                         const ClosedLoopOptions& options) {
  check_loop(fluxes, G, u0);
  RunOptions run_options = options.run;
  BoundaryPolicy policy;
  if (run_options.extrapolated_trace) {
    policy = [&G](const GridState& s, double) { return G(extrapolated_outflow(s)); };
  } else {
    policy = [&G](const GridState& s, double) { return G(s.outflow()); };
  }
  ClosedLoopRun out;
  out.run = run_with_policy(fluxes, u0, T, grid, policy, run_options);
  out.feedback_residual = feedback_residual(out.run.traces, G);
  return out;
}

ClosedLoopRun run_method_of_steps(std::span<const Flux> fluxes, const FeedbackMap& G,
                                  const GridState& u0, double T, const Grid& grid,
                                  const Inflow& dummy, const ClosedLoopOptions& options) {
  check_loop(fluxes, G, u0);
  if (!(options.slab_safety > 0.0 && options.slab_safety <= 1.0)) {
    throw DomainError("slab_safety must lie in (0, 1]");
  }
  double lip = 0.0;
  for (const auto& f : fluxes) lip = std::max(lip, f.lip_const());
  if (!(lip > 0.0) || !std::isfinite(lip)) {
    throw PreconditionError("method of steps needs globally Lipschitz fluxes with C_f > 0");
  }
  const SlabSchedule schedule = SlabSchedule::make(options.slab_safety / lip, T);

  RunOptions scratch = options.run;
  scratch.keep_trajectory = false;

  // Input fixed so far, as a hold series on [0, t_n).
  HoldSeries fixed;
  ClosedLoopRun out;
  out.schedule = schedule;
  if (schedule.slabs() == 0) {
    out.run = run_open_loop(fluxes, u0, dummy, T, grid, options.run);
    out.feedback_residual = feedback_residual(out.run.traces, G);
    return out;
  }

  for (std::size_t s = 0; s < schedule.slabs(); ++s) {
    const double t_n = schedule.t[s];
    const double t_next = schedule.t[s + 1];
    const bool last = s + 1 == schedule.slabs();

    const Inflow provisional = [&](double t) {
      return (t < t_n && !fixed.times.empty()) ? fixed(t) : dummy(t);
    };
    const RunResult probe = run_open_loop(fluxes, u0, provisional, t_next, grid, scratch);

    // Outflow on [t_n, t_next) fixes the input there.
    const auto& tr = probe.traces;
    const auto first = std::upper_bound(tr.times.begin(), tr.times.end(), t_n);
    const std::size_t k0 = static_cast<std::size_t>(first - tr.times.begin()) - 1;
    fixed.times.push_back(t_n);
    fixed.values.push_back(G(tr.outflow[k0]));
    for (std::size_t k = k0 + 1; k < tr.size() && tr.times[k] < t_next; ++k) {
      fixed.times.push_back(tr.times[k]);
      fixed.values.push_back(G(tr.outflow[k]));
    }

    const Inflow settled = [&](double t) { return fixed(t); };
    RunResult rerun =
        run_open_loop(fluxes, u0, settled, t_next, grid, last ? options.run : scratch);
    if (last) out.run = std::move(rerun);
  }
  out.feedback_residual = feedback_residual(out.run.traces, G);
  return out;
}

void write_feedback_csv(const std::string& path, const TraceSeries& traces,
                        const std::vector<double>& residual) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path + " for writing");
  const int n = traces.component_count;
  std::fputs("t", f);
  for (int i = 0; i < n; ++i) std::fprintf(f, ",y_%d", i + 1);
  for (int i = 0; i < n; ++i) std::fprintf(f, ",w_%d", i + 1);
  std::fputs(",residual\n", f);
  for (std::size_t k = 0; k < traces.size(); ++k) {
    std::fprintf(f, "%.17g", traces.times[k]);
    for (int i = 0; i < n; ++i) std::fprintf(f, ",%.17g", traces.outflow[k](i));
    for (int i = 0; i < n; ++i) std::fprintf(f, ",%.17g", traces.inflow[k](i));
    std::fprintf(f, ",%.17g\n", k < residual.size() ? residual[k] : 0.0);
  }
  std::fclose(f);
}

DelayTestResult delay_independence_test(std::span<const Flux> fluxes, const GridState& u0,
                                        const Inflow& w, const Inflow& z, double t_tilde,
                                        const Grid& grid, const DelayTestOptions& options) {
  if (static_cast<int>(fluxes.size()) != u0.components()) {
    throw DimensionError("flux count does not match the initial state");
  }
  if (!(t_tilde >= 0.0)) throw DomainError("t_tilde must be >= 0");
  if (options.samples < 1) throw DomainError("sample count must be positive");
  if (!(options.window_fraction > 0.0)) throw DomainError("window fraction must be positive");

  for (int s = 0; s < options.samples && t_tilde > 0.0; ++s) {
    const double t = t_tilde * (s + 0.5) / options.samples;
    if ((w(t) - z(t)).lpNorm<Eigen::Infinity>() > 1e-12) {
      throw PreconditionError("inputs differ before t_tilde (at t = " + std::to_string(t) + ")");
    }
  }

  double horizon = 0.0;
  if (options.horizon) {
    horizon = *options.horizon;
  } else {
    double a = std::numeric_limits<double>::infinity();
    for (const auto& f : fluxes) a = std::min(a, f.a_lower());
    if (!(a > 0.0)) {
      throw PreconditionError("delay test needs a_lower > 0 or an explicit horizon");
    }
    horizon = t_tilde + 1.0 / a;
  }

  double sup_input = 0.0;
  for (int s = 0; s <= options.samples; ++s) {
    const double t = horizon * s / options.samples;
    sup_input = std::max({sup_input, w(t).lpNorm<Eigen::Infinity>(), z(t).lpNorm<Eigen::Infinity>()});
  }
  const double R = u0.sup_norm() + sup_input;
  double a_bar = 0.0;
  for (const auto& f : fluxes) a_bar = std::max(a_bar, f.speed_range(-R, R).second);
  if (!(a_bar > 0.0)) throw PreconditionError("characteristic speed bound is zero");

  DelayTestResult res;
  res.a_bar = a_bar;
  res.delta_bar = 1.0 / a_bar;
  res.window_end = t_tilde + options.window_fraction * res.delta_bar;
  res.dt = grid.cfl * grid.dx / a_bar;

  RunOptions ro;
  ro.fixed_dt = res.dt;
  ro.keep_trajectory = false;
  auto run_w = std::async(std::launch::async, [&] {
    return run_open_loop(fluxes, u0, w, res.window_end, grid, ro);
  });
  const RunResult rz = run_open_loop(fluxes, u0, z, res.window_end, grid, ro);
  const RunResult rw = run_w.get();

  if (rw.traces.size() != rz.traces.size()) throw NumericalError("delay runs took different steps");
  for (std::size_t k = 0; k < rw.traces.size(); ++k) {
    if (rw.traces.times[k] >= res.window_end) break;
    res.deviation = std::max(
        res.deviation, (rw.traces.outflow[k] - rz.traces.outflow[k]).lpNorm<Eigen::Infinity>());
  }
  return res;
}

BlowupResult detect_blowup(double c, double M, double T, const Grid& grid,
                           const BlowupOptions& options) {
  if (!(c >= 1.0)) throw DomainError("blow-up scenario needs c >= 1");
  if (!(M > c)) throw DomainError("truncation bound must exceed c");
  if (!(options.gain > 0.0)) throw DomainError("blow-up scenario needs a positive gain");
  const std::vector<Flux> fluxes{Flux::truncated(Flux::quadratic_plus_one(), M)};
  Eigen::MatrixXd K(1, 1);
  K(0, 0) = options.gain;
  const FeedbackMap G = FeedbackMap::linear(K);

  BlowupResult res;
  res.threshold = options.threshold_fraction * M;
  ClosedLoopOptions co;
  co.run.keep_trajectory = false;
  co.run.stop_above = res.threshold;
  const GridState u0 = GridState::constant(Eigen::VectorXd::Constant(1, c), grid);
  const ClosedLoopRun run = run_direct(fluxes, G, u0, T, grid, co);

  const auto& tr = run.traces();
  const double step_up = std::sqrt(options.gain);
  res.traversals.push_back({0.0, tr.outflow.front()(0)});
  double level = c;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    const double y = tr.outflow[k](0);
    if (y > level * step_up) {
      level *= options.gain;
      res.traversals.push_back({tr.times[k], y});
    }
    res.traversals.back().amplitude = y;
  }
  res.final_time = tr.times.back();
  if (run.run.stopped_early) res.t_blow = tr.times.back();
  return res;
}

}  // namespace fbcl
