#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbcl/feedback.hpp"
#include "fbcl/flux.hpp"
#include "fbcl/solver.hpp"

namespace fbcl {

/// Slab boundaries t_k = min(k tau, T) of the method of steps.
struct SlabSchedule {
  double tau = 0.0;
  double T = 0.0;
  std::vector<double> t;  // t[0] = 0, ..., t.back() = T

  static SlabSchedule make(double tau, double T);
  std::size_t slabs() const { return t.empty() ? 0 : t.size() - 1; }
};

struct ClosedLoopRun {
  RunResult run;
  /// |w(t_k) - G(y(t_k))|_inf at every trace time.
  std::vector<double> feedback_residual;
  std::optional<SlabSchedule> schedule;

  const TraceSeries& traces() const { return run.traces; }
  const GridState& final_state() const { return run.final_state; }
};

struct ClosedLoopOptions {
  RunOptions run;
  /// Slabs are slab_safety / C_f long.
  double slab_safety = 0.9;
};

/// Per-step coupling: the step starting at t_m uses w_m = G(y_m), where y_m
/// is the outflow trace at t_m (so w_0 = G of u0's last cell).
ClosedLoopRun run_direct(std::span<const Flux> fluxes, const FeedbackMap& G,
                         const GridState& u0, double T, const Grid& grid,
                         const ClosedLoopOptions& options = {});

/// Slab construction: on each slab the open loop is solved from t = 0 with
/// the already fixed input extended by `dummy`, the input on the new slab is
/// replaced by G of the resulting outflow trace (held between trace times),
/// and the open loop is solved again. Returns the last re-solve.
ClosedLoopRun run_method_of_steps(std::span<const Flux> fluxes, const FeedbackMap& G,
                                  const GridState& u0, double T, const Grid& grid,
                                  const Inflow& dummy, const ClosedLoopOptions& options = {});

/// The default dummy input: constant zero.
Inflow zero_inflow(int n);

/// |w_k - G(y_k)|_inf for every entry of a trace series.
std::vector<double> feedback_residual(const TraceSeries& traces, const FeedbackMap& G);

void write_feedback_csv(const std::string& path, const TraceSeries& traces,
                        const std::vector<double>& residual);

struct DelayTestOptions {
  /// Measure the deviation on (0, t_tilde + window_fraction * delta_bar).
  double window_fraction = 1.0;
  /// Horizon used to estimate sup |w| and sup |z|.
  std::optional<double> horizon;
  /// Samples used to verify w = z on (0, t_tilde) and to estimate sup norms.
  int samples = 4000;
};

struct DelayTestResult {
  double a_bar = 0.0;
  double delta_bar = 0.0;
  double window_end = 0.0;
  double deviation = 0.0;
  double dt = 0.0;
};

/// Runs the open loop under w and under z with a shared fixed dt at the CFL
/// limit of the larger speed bound, and returns the largest outflow deviation
/// before t_tilde + window_fraction * delta_bar, with delta_bar = 1 / a_bar
/// and a_bar the largest f_i' over |v| <= |u0|_inf + max(|w|_inf, |z|_inf).
/// Throws PreconditionError when w and z differ on (0, t_tilde).
DelayTestResult delay_independence_test(std::span<const Flux> fluxes, const GridState& u0,
                                        const Inflow& w, const Inflow& z, double t_tilde,
                                        const Grid& grid, const DelayTestOptions& options = {});

struct Traversal {
  double time = 0.0;       // first time the outflow crossed into this level
  double amplitude = 0.0;  // outflow plateau value reached on this level
};

struct BlowupResult {
  std::optional<double> t_blow;
  std::vector<Traversal> traversals;
  double threshold = 0.0;
  double final_time = 0.0;
};

struct BlowupOptions {
  double gain = 2.0;
  /// Detection threshold as a fraction of the truncation bound.
  double threshold_fraction = 0.8;
  int snapshot_stride = 50;
};

/// Scalar blow-up scenario: flux Truncated(1 + u^2, M), G(y) = gain * y,
/// u0 = c. Reports the first time the outflow exceeds threshold_fraction * M
/// and the sequence of outflow levels, each level being entered when the
/// trace crosses sqrt(gain) times the previous level.
BlowupResult detect_blowup(double c, double M, double T, const Grid& grid,
                           const BlowupOptions& options = {});

}  // namespace fbcl
