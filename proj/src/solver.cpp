#include "fbcl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fbcl/errors.hpp"

namespace fbcl {

Grid Grid::make(int n_cells, double cfl) {
  if (n_cells < 4) throw DomainError("grid needs at least 4 cells");
  if (!(cfl > 0.0 && cfl <= 1.0)) throw DomainError("cfl must lie in (0, 1]");
  Grid g;
  g.n_cells = n_cells;
  g.dx = 1.0 / n_cells;
  g.cfl = cfl;
  if (g.dx * n_cells != 1.0) {
    throw DomainError("dx * N is not exactly 1 for N = " + std::to_string(n_cells) +
                      "; pick a neighbouring cell count");
  }
  return g;
}

GridState GridState::from_functions(const std::vector<std::function<double(double)>>& u0,
                                    const Grid& grid, int sub) {
  if (sub < 1) throw DomainError("sub-sampling count must be positive");
  GridState s;
  s.values.resize(static_cast<Eigen::Index>(u0.size()), grid.n_cells);
  for (std::size_t i = 0; i < u0.size(); ++i) {
    for (int j = 0; j < grid.n_cells; ++j) {
      double acc = 0.0;
      for (int q = 0; q < sub; ++q) acc += u0[i]((j + (q + 0.5) / sub) * grid.dx);
      s.values(static_cast<Eigen::Index>(i), j) = acc / sub;
    }
  }
  if (!s.values.allFinite()) throw DomainError("initial datum is not finite");
  return s;
}

GridState GridState::constant(const Eigen::VectorXd& c, const Grid& grid) {
  GridState s;
  s.values = c.replicate(1, grid.n_cells);
  return s;
}

void TraceSeries::validate() const {
  if (inflow.size() != times.size() || outflow.size() != times.size()) {
    throw NumericalError("trace series lengths disagree");
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw NumericalError("trace times are not increasing");
  }
}

Inflow constant_inflow(Eigen::VectorXd value) {
  return [value = std::move(value)](double) { return value; };
}

Eigen::VectorXd HoldSeries::operator()(double t) const {
  if (times.empty()) throw PreconditionError("empty hold series");
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return values.front();
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double max_speed(std::span<const Flux> fluxes, const GridState& state, const Eigen::VectorXd& w) {
  double speed = 0.0;
  for (int i = 0; i < state.components(); ++i) {
    const auto row = state.values.row(i);
    const double lo = std::min(row.minCoeff(), w(i));
    const double hi = std::max(row.maxCoeff(), w(i));
    const auto [smin, smax] = fluxes[static_cast<std::size_t>(i)].speed_range(lo, hi);
    if (smin < 0.0) {
      throw DomainError("component " + std::to_string(i) +
                        " reached a state with negative characteristic speed");
    }
    speed = std::max(speed, smax);
  }
  return speed;
}

namespace {

double admissible_dt(std::span<const Flux> fluxes, const GridState& state,
                     const Eigen::VectorXd& w, const Grid& grid) {
  const double speed = max_speed(fluxes, state, w);
  return speed > 0.0 ? grid.cfl * grid.dx / speed : std::numeric_limits<double>::infinity();
}

void check_sizes(std::span<const Flux> fluxes, const GridState& state, const Grid& grid) {
  if (static_cast<int>(fluxes.size()) != state.components()) {
    throw DimensionError("flux count does not match the number of components");
  }
  if (state.cells() != grid.n_cells) throw DimensionError("state does not match the grid");
}

}  // namespace

GridState step(std::span<const Flux> fluxes, const GridState& state, const Eigen::VectorXd& w,
               double dt, const Grid& grid, BoundaryFluxes* boundary) {
  check_sizes(fluxes, state, grid);
  if (w.size() != state.components()) throw DimensionError("inflow has the wrong size");
  if (!w.allFinite()) throw NumericalError("non-finite inflow at t = " + std::to_string(state.t));
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const double limit = admissible_dt(fluxes, state, w, grid);
  if (dt > limit * (1.0 + 1e-9)) {
    throw CflError("time step " + std::to_string(dt) + " exceeds the CFL limit " +
                       std::to_string(limit),
                   limit);
  }

  const int n = state.components();
  const int N = grid.n_cells;
  const double lambda = dt / grid.dx;
  GridState next;
  next.t = state.t + dt;
  next.values.resize(n, N);
  if (boundary) {
    boundary->inflow.resize(n);
    boundary->outflow.resize(n);
  }
  for (int i = 0; i < n; ++i) {
    const Flux& f = fluxes[static_cast<std::size_t>(i)];
    const double* u = state.values.row(i).data();
    double* out = next.values.row(i).data();
    double left = godunov_flux(f, w(i), u[0]);
    if (boundary) boundary->inflow(i) = left;
    for (int j = 0; j < N; ++j) {
      const double right = j + 1 < N ? godunov_flux(f, u[j], u[j + 1]) : f(u[j]);
      out[j] = u[j] - lambda * (right - left);
      left = right;
    }
    if (boundary) boundary->outflow(i) = left;
  }
  return next;
}

Eigen::VectorXd extrapolated_outflow(const GridState& state) {
  const Eigen::Index N = state.values.cols();
  if (N < 3) return state.outflow();
  // right-edge value of the quadratic with these three cell averages
  return (11.0 * state.values.col(N - 1) - 7.0 * state.values.col(N - 2) +
          2.0 * state.values.col(N - 3)) /
         6.0;
}

RunResult run_with_policy(std::span<const Flux> fluxes, const GridState& u0, double T,
                          const Grid& grid, const BoundaryPolicy& policy,
                          const RunOptions& options) {
  check_sizes(fluxes, u0, grid);
  if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("horizon must be finite and >= 0");
  if (options.snapshot_stride < 1) throw DomainError("snapshot stride must be positive");
  if (options.fixed_dt && !(*options.fixed_dt > 0.0)) throw DomainError("fixed dt must be positive");
  if (!u0.values.allFinite()) throw DomainError("initial state is not finite");

  const int n = u0.components();
  auto trace_of = [&](const GridState& s) {
    return options.extrapolated_trace ? extrapolated_outflow(s) : s.outflow();
  };

  RunResult result;
  result.traces.component_count = n;
  GridState state = u0;
  state.t = 0.0;
  if (options.keep_trajectory) result.trajectory.push_back(state);
  result.traces.times.push_back(0.0);
  result.traces.outflow.push_back(trace_of(state));

  Eigen::VectorXd bound = state.values.cwiseAbs().rowwise().maxCoeff();
  const double end_slack = 1e-12 * std::max(1.0, T);
  long steps = 0;

  while (state.t < T) {
    const double remaining = T - state.t;
    double dt = 0.0;
    Eigen::VectorXd w;
    if (options.fixed_dt) {
      dt = std::min(*options.fixed_dt, remaining);
      w = policy(state, state.t + 0.5 * dt);
    } else {
      w = policy(state, state.t);
      dt = std::min(remaining, admissible_dt(fluxes, state, w, grid));
      // The midpoint input can raise the speed; shrink until consistent.
      for (int iter = 0; iter < 16; ++iter) {
        w = policy(state, state.t + 0.5 * dt);
        const double limit = admissible_dt(fluxes, state, w, grid);
        if (dt <= limit) break;
        dt = limit;
      }
    }
    if (remaining - dt < end_slack) dt = remaining;
    if (w.size() != n) throw DimensionError("boundary policy returned the wrong size");

    GridState next = step(fluxes, state, w, dt, grid);
    if (dt == remaining) next.t = T;

    if (!next.values.allFinite()) {
      throw NumericalError("non-finite state at t = " + std::to_string(next.t));
    }
    bound = bound.cwiseMax(w.cwiseAbs());
    const Eigen::VectorXd sup = next.values.cwiseAbs().rowwise().maxCoeff();
    for (int i = 0; i < n; ++i) {
      const double excess = sup(i) - bound(i);
      result.max_principle_excess = std::max(result.max_principle_excess, excess);
      if (options.check_max_principle &&
          excess > options.max_principle_tol * std::max(1.0, bound(i))) {
        throw NumericalError("maximum principle violated by " + std::to_string(excess) +
                             " in component " + std::to_string(i) + " at t = " +
                             std::to_string(next.t));
      }
    }

    result.traces.inflow.push_back(w);
    result.traces.times.push_back(next.t);
    result.traces.outflow.push_back(trace_of(next));
    result.dts.push_back(dt);
    state = std::move(next);
    ++steps;

    const bool last = state.t >= T;
    if (options.keep_trajectory && (steps % options.snapshot_stride == 0 || last)) {
      result.trajectory.push_back(state);
    }
    if (options.stop_above && result.traces.outflow.back().lpNorm<Eigen::Infinity>() > *options.stop_above) {
      result.stopped_early = true;
      if (options.keep_trajectory && result.trajectory.back().t != state.t) {
        result.trajectory.push_back(state);
      }
      break;
    }
  }
  result.traces.inflow.push_back(policy(state, state.t));
  result.final_state = std::move(state);
  return result;
}

RunResult run_open_loop(std::span<const Flux> fluxes, const GridState& u0, const Inflow& w,
                        double T, const Grid& grid, const RunOptions& options) {
  return run_with_policy(fluxes, u0, T, grid,
                         [&w](const GridState&, double t) { return w(t); }, options);
}

Eigen::VectorXd l1_distance(const GridState& a, const GridState& b, const Grid& grid) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw DimensionError("states live on different grids");
  }
  return (a.values - b.values).cwiseAbs().rowwise().sum() * grid.dx;
}

namespace {

void require_stride_one(const RunResult& run) {
  if (run.trajectory.size() != run.traces.size()) {
    throw PreconditionError("operation needs a stride-1 trajectory");
  }
}

}  // namespace

L1Check l1_distance_estimate(const RunResult& run1, const RunResult& run2,
                             std::span<const Flux> fluxes, const Grid& grid) {
  require_stride_one(run1);
  require_stride_one(run2);
  if (run1.trajectory.size() != run2.trajectory.size()) {
    throw DimensionError("runs have different numbers of time levels");
  }
  const std::size_t K = run1.trajectory.size();
  const int n = run1.trajectory.front().components();
  if (run2.trajectory.front().components() != n) throw DimensionError("component counts differ");

  L1Check check;
  check.lhs.resize(static_cast<Eigen::Index>(K), n);
  check.rhs.resize(static_cast<Eigen::Index>(K), n);
  check.worst_excess = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd rhs = l1_distance(run1.trajectory.front(), run2.trajectory.front(), grid);
  for (std::size_t k = 0; k < K; ++k) {
    const double t1 = run1.traces.times[k];
    const double t2 = run2.traces.times[k];
    if (std::abs(t1 - t2) > 1e-12 * std::max(1.0, t1)) {
      throw PreconditionError("runs do not share time levels");
    }
    if (k > 0) {
      const double dt = t1 - run1.traces.times[k - 1];
      const auto& w = run1.traces.inflow[k - 1];
      const auto& z = run2.traces.inflow[k - 1];
      for (int i = 0; i < n; ++i) {
        const Flux& f = fluxes[static_cast<std::size_t>(i)];
        rhs(i) += dt * std::abs(f(w(i)) - f(z(i)));
      }
    }
    const Eigen::VectorXd lhs = l1_distance(run1.trajectory[k], run2.trajectory[k], grid);
    check.times.push_back(t1);
    check.lhs.row(static_cast<Eigen::Index>(k)) = lhs.transpose();
    check.rhs.row(static_cast<Eigen::Index>(k)) = rhs.transpose();
    check.worst_excess = std::max(check.worst_excess, (lhs - rhs).maxCoeff());
  }
  return check;
}

double entropy_residual(const RunResult& run, std::span<const Flux> fluxes, const Grid& grid,
                        std::span<const double> k_values) {
  require_stride_one(run);
  double worst = 0.0;
  const int N = grid.n_cells;
  std::vector<double> Q(static_cast<std::size_t>(N) + 1);
  for (std::size_t m = 0; m + 1 < run.trajectory.size(); ++m) {
    const GridState& cur = run.trajectory[m];
    const GridState& nxt = run.trajectory[m + 1];
    const double lambda = (nxt.t - cur.t) / grid.dx;
    const Eigen::VectorXd& w = run.traces.inflow[m];
    for (int i = 0; i < cur.components(); ++i) {
      const Flux& f = fluxes[static_cast<std::size_t>(i)];
      const double* u = cur.values.row(i).data();
      const double* v = nxt.values.row(i).data();
      for (double k : k_values) {
        auto q = [&](double a, double b) {
          return godunov_flux(f, std::max(a, k), std::max(b, k)) -
                 godunov_flux(f, std::min(a, k), std::min(b, k));
        };
        Q[0] = q(w(i), u[0]);
        for (int j = 0; j < N; ++j) Q[static_cast<std::size_t>(j) + 1] = q(u[j], j + 1 < N ? u[j + 1] : u[j]);
        for (int j = 0; j < N; ++j) {
          const auto jj = static_cast<std::size_t>(j);
          const double r = std::abs(v[j] - k) - std::abs(u[j] - k) + lambda * (Q[jj + 1] - Q[jj]);
          worst = std::max(worst, r);
        }
      }
    }
  }
  return worst;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

std::unique_ptr<std::FILE, FileCloser> open_for_write(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path + " for writing");
  return std::unique_ptr<std::FILE, FileCloser>(f);
}

}  // namespace

void write_state_csv(const std::string& path, std::span<const GridState> trajectory,
                     const Grid& grid) {
  auto file = open_for_write(path);
  const int n = trajectory.empty() ? 0 : trajectory.front().components();
  std::fputs("t,x", file.get());
  for (int i = 0; i < n; ++i) std::fprintf(file.get(), ",u_%d", i + 1);
  std::fputc('\n', file.get());
  for (const auto& s : trajectory) {
    for (int j = 0; j < s.cells(); ++j) {
      std::fprintf(file.get(), "%.17g,%.17g", s.t, grid.center(j));
      for (int i = 0; i < n; ++i) std::fprintf(file.get(), ",%.17g", s.values(i, j));
      std::fputc('\n', file.get());
    }
  }
}

void write_traces_csv(const std::string& path, const TraceSeries& traces) {
  auto file = open_for_write(path);
  const int n = traces.component_count;
  std::fputs("t", file.get());
  for (int i = 0; i < n; ++i) std::fprintf(file.get(), ",w_%d", i + 1);
  for (int i = 0; i < n; ++i) std::fprintf(file.get(), ",y_%d", i + 1);
  std::fputc('\n', file.get());
  for (std::size_t k = 0; k < traces.size(); ++k) {
    std::fprintf(file.get(), "%.17g", traces.times[k]);
    for (int i = 0; i < n; ++i) std::fprintf(file.get(), ",%.17g", traces.inflow[k](i));
    for (int i = 0; i < n; ++i) std::fprintf(file.get(), ",%.17g", traces.outflow[k](i));
    std::fputc('\n', file.get());
  }
}

}  // namespace fbcl
