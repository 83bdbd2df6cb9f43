#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbcl/flux.hpp"

namespace fbcl {

/// Uniform grid on (0, 1). N must be at least 4 and dx * N must equal 1 in
/// floating point; construction rejects N that violate either.
struct Grid {
  int n_cells = 0;
  double dx = 0.0;
  double cfl = 0.9;

  static Grid make(int n_cells, double cfl = 0.9);
  double center(int j) const { return (j + 0.5) * dx; }
};

/// Cell averages of all n components: values(i, j) is component i in cell j.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GridState {
  double t = 0.0;
  Field values;

  int components() const { return static_cast<int>(values.rows()); }
  int cells() const { return static_cast<int>(values.cols()); }
  /// u(t, 1-): the last cell of every component.
  Eigen::VectorXd outflow() const { return values.col(values.cols() - 1); }
  double sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }

  /// Cell averages of u0_i, approximated by `sub` midpoint samples per cell.
  static GridState from_functions(const std::vector<std::function<double(double)>>& u0,
                                  const Grid& grid, int sub = 8);
  static GridState constant(const Eigen::VectorXd& c, const Grid& grid);
};

/// Boundary data recorded at every accepted step. inflow[k] is the value
/// applied on (times[k], times[k+1]); the last entry holds the input at the
/// final time. outflow[k] is the last-cell value at times[k].
struct TraceSeries {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> inflow;
  std::vector<Eigen::VectorXd> outflow;
  int component_count = 0;

  std::size_t size() const { return times.size(); }
  /// Throws NumericalError if times are not strictly increasing or lengths
  /// disagree.
  void validate() const;
};

/// Prescribed input w(t).
using Inflow = std::function<Eigen::VectorXd(double)>;

Inflow constant_inflow(Eigen::VectorXd value);

/// Sampled input with previous-sample hold: value(t) = values[k] for
/// times[k] <= t < times[k+1], values[0] before times[0].
struct HoldSeries {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;

  Eigen::VectorXd operator()(double t) const;
};

/// Boundary rule for one step: given the state at the start of the step and
/// the step midpoint, returns the inflow value to apply.
using BoundaryPolicy = std::function<Eigen::VectorXd(const GridState&, double t_mid)>;

/// sup |f_i'| over the range of component i of `state` and w_i, maximized
/// over components. Throws DomainError when any f_i' is negative there.
double max_speed(std::span<const Flux> fluxes, const GridState& state, const Eigen::VectorXd& w);

struct BoundaryFluxes {
  Eigen::VectorXd inflow;   // F_{1/2}
  Eigen::VectorXd outflow;  // F_{N+1/2}
};

/// One explicit Godunov step. Left ghost = w, right ghost = last cell.
/// Throws CflError (with the admissible dt) when dt exceeds cfl * dx / max_speed.
GridState step(std::span<const Flux> fluxes, const GridState& state, const Eigen::VectorXd& w,
               double dt, const Grid& grid, BoundaryFluxes* boundary = nullptr);

struct RunOptions {
  /// Use this dt instead of the adaptive CFL step (still checked).
  std::optional<double> fixed_dt;
  /// Keep every k-th state; the initial and final states are always kept.
  int snapshot_stride = 1;
  bool keep_trajectory = true;
  /// Assert |u_i| <= max(|u0_i|, sup |w_i|) + tol after every step.
  bool check_max_principle = true;
  double max_principle_tol = 1e-12;
  /// Stop as soon as |outflow|_inf exceeds this value.
  std::optional<double> stop_above;
  /// Record outflow traces by 3-cell quadratic extrapolation to x = 1.
  bool extrapolated_trace = false;
};

struct RunResult {
  std::vector<GridState> trajectory;
  TraceSeries traces;
  GridState final_state;
  std::vector<double> dts;
  /// Worst excess of |u| over the maximum-principle bound seen during the run.
  double max_principle_excess = -std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Advances from u0 to T under a boundary policy. Adaptive dt is taken at the
/// CFL limit, with the input evaluated at the step midpoint; the final step is
/// truncated to land on T.
RunResult run_with_policy(std::span<const Flux> fluxes, const GridState& u0, double T,
                          const Grid& grid, const BoundaryPolicy& policy,
                          const RunOptions& options = {});

RunResult run_open_loop(std::span<const Flux> fluxes, const GridState& u0, const Inflow& w,
                        double T, const Grid& grid, const RunOptions& options = {});

/// 3-cell quadratic extrapolation of the cell averages to x = 1.
Eigen::VectorXd extrapolated_outflow(const GridState& state);

struct L1Check {
  std::vector<double> times;
  Eigen::MatrixXd lhs;  // times x components
  Eigen::MatrixXd rhs;
  double worst_excess = 0.0;  // max(lhs - rhs)
  bool passed(double tol) const { return worst_excess <= tol; }
};

/// Per-time, per-component terms of the L1 stability estimate:
/// lhs = dx sum |u - v|, rhs = |u0 - v0|_1 + integral of |f(w) - f(z)|, where
/// the integral is taken over the piecewise-constant inputs the runs applied.
/// Both runs must have stride-1 trajectories on the same time levels.
L1Check l1_distance_estimate(const RunResult& run1, const RunResult& run2,
                             std::span<const Flux> fluxes, const Grid& grid);

/// Largest discrete Kruzkov entropy production over all cells, steps and k:
/// eta(u_new) - eta(u) + (dt/dx)(Q_{j+1/2} - Q_{j-1/2}) with the Crandall-Majda
/// entropy flux. Needs a stride-1 trajectory.
double entropy_residual(const RunResult& run, std::span<const Flux> fluxes, const Grid& grid,
                        std::span<const double> k_values);

/// dx * sum_j |a_ij - b_ij| per component.
Eigen::VectorXd l1_distance(const GridState& a, const GridState& b, const Grid& grid);

void write_state_csv(const std::string& path, std::span<const GridState> trajectory,
                     const Grid& grid);
void write_traces_csv(const std::string& path, const TraceSeries& traces);

}  // namespace fbcl
