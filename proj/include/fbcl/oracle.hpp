#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "fbcl/feedback.hpp"
#include "fbcl/flux.hpp"

namespace fbcl::oracle {

/// u_t + lambda_i u_x = 0 with u(t, 0) = K u(t, 1).
struct LinearClosedLoopSpec {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd K;
  std::vector<std::function<double(double)>> u0;

  void validate() const;
};

/// Exact solution by tracing characteristics back through at most
/// `depth_limit` boundary reflections. Throws DepthError (carrying
/// ceil(max lambda * t) + 1) when more are needed.
Eigen::VectorXd exact_linear_eval(const LinearClosedLoopSpec& spec, double t, double x,
                                  int depth_limit = 50);

/// Cell averages of the exact solution at time t, `sub` samples per cell.
Eigen::MatrixXd exact_linear_cells(const LinearClosedLoopSpec& spec, double t, int n_cells,
                                   int sub = 16, int depth_limit = 50);

struct LogRange {
  double lo = -10.0;
  double hi = 10.0;
};

/// Grid search for inf |Delta K Delta^-1|_p over log-uniform Delta (Delta_0 = 1).
/// After each pass the grid is re-centred on the best node with a half-width of
/// two grid spacings, `zoom_levels` times, never leaving `range`. n <= 4.
double brute_force_rho(const Eigen::MatrixXd& K, Norm p, int grid_per_axis = 41,
                       LogRange range = {}, int zoom_levels = 12);

/// Spectral radius of the entrywise absolute value |K|.
double spectral_radius_abs(const Eigen::MatrixXd& K);

/// Entropy solution of the Riemann problem (uL for x < x0, uR for x > x0) at
/// (t, x). The flux must be convex or concave between uL and uR.
double riemann_exact(const Flux& f, double uL, double uR, double t, double x, double x0 = 0.0);

}  // namespace fbcl::oracle
