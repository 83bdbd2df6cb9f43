#include "fbcl/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "fbcl/errors.hpp"

namespace fbcl::oracle {

void LinearClosedLoopSpec::validate() const {
  const auto n = lambda.size();
  if (K.rows() != n || K.cols() != n || static_cast<Eigen::Index>(u0.size()) != n) {
    throw DimensionError("linear closed-loop spec has inconsistent sizes");
  }
  if (!(lambda.array() > 0.0).all()) throw DomainError("speeds must be positive");
}

namespace {

double trace_component(const LinearClosedLoopSpec& spec, int i, double t, double x, int depth,
                       int limit, int required) {
  const double li = spec.lambda(i);
  if (x >= li * t) return spec.u0[static_cast<std::size_t>(i)](x - li * t);
  if (depth >= limit) {
    throw DepthError("characteristic recursion needs more than " + std::to_string(limit) +
                         " reflections",
                     required);
  }
  const double s = t - x / li;
  double v = 0.0;
  for (int j = 0; j < spec.K.cols(); ++j) {
    const double k = spec.K(i, j);
    if (k != 0.0) v += k * trace_component(spec, j, s, 1.0, depth + 1, limit, required);
  }
  return v;
}

}  // namespace

Eigen::VectorXd exact_linear_eval(const LinearClosedLoopSpec& spec, double t, double x,
                                  int depth_limit) {
  spec.validate();
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("x must lie in [0, 1]");
  const int required = static_cast<int>(std::ceil(spec.lambda.maxCoeff() * t)) + 1;
  Eigen::VectorXd u(spec.lambda.size());
  for (int i = 0; i < u.size(); ++i) u(i) = trace_component(spec, i, t, x, 0, depth_limit, required);
  return u;
}

Eigen::MatrixXd exact_linear_cells(const LinearClosedLoopSpec& spec, double t, int n_cells,
                                   int sub, int depth_limit) {
  const double dx = 1.0 / n_cells;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(spec.lambda.size(), n_cells);
  for (int j = 0; j < n_cells; ++j) {
    for (int q = 0; q < sub; ++q) {
      out.col(j) += exact_linear_eval(spec, t, (j + (q + 0.5) / sub) * dx, depth_limit);
    }
  }
  return out / sub;
}

double brute_force_rho(const Eigen::MatrixXd& K, Norm p, int grid_per_axis, LogRange range,
                       int zoom_levels) {
  if (K.rows() != K.cols()) throw DimensionError("brute_force_rho needs a square matrix");
  const int n = static_cast<int>(K.rows());
  if (n > 4) throw DimensionError("brute_force_rho supports n <= 4");
  if (grid_per_axis < 3) throw DomainError("grid needs at least 3 nodes per axis");
  if (n <= 1) return n == 0 ? 0.0 : std::abs(K(0, 0));

  const int dim = n - 1;
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, range.lo);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, range.hi);
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd best_x = Eigen::VectorXd::Zero(dim);
  double best = std::numeric_limits<double>::infinity();

  long nodes = 1;
  for (int d = 0; d < dim; ++d) nodes *= grid_per_axis;
  for (int level = 0; level <= zoom_levels; ++level) {
    const Eigen::VectorXd h = (hi - lo) / (grid_per_axis - 1);
    for (long idx = 0; idx < nodes; ++idx) {
      long rest = idx;
      Eigen::VectorXd x(dim);
      for (int d = 0; d < dim; ++d) {
        x(d) = lo(d) + h(d) * static_cast<double>(rest % grid_per_axis);
        rest /= grid_per_axis;
        delta(d + 1) = std::exp(x(d));
      }
      const double v = scaled_norm(K, delta, p);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    lo = (best_x - 2.0 * h).cwiseMax(range.lo);
    hi = (best_x + 2.0 * h).cwiseMin(range.hi);
  }
  return best;
}

double spectral_radius_abs(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw DimensionError("spectral radius needs a square matrix");
  if (K.size() == 0) return 0.0;
  return K.cwiseAbs().eigenvalues().cwiseAbs().maxCoeff();
}

double riemann_exact(const Flux& f, double uL, double uR, double t, double x, double x0) {
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  if (uL == uR) return uL;
  if (t == 0.0) return x < x0 ? uL : uR;

  const double lo = std::min(uL, uR);
  const double hi = std::max(uL, uR);
  bool convex = true;
  bool concave = true;
  constexpr int kProbe = 256;
  const double scale = std::max(1.0, f.max_abs_speed(lo, hi));
  for (int s = 0; s <= kProbe; ++s) {
    const double d2 = f.second_derivative(lo + (hi - lo) * s / kProbe);
    convex = convex && d2 >= -1e-12 * scale;
    concave = concave && d2 <= 1e-12 * scale;
  }
  if (!convex && !concave) {
    throw DomainError("riemann_exact needs a convex or concave flux on the data range");
  }

  const double xi = (x - x0) / t;
  const bool shock = convex ? uL > uR : uL < uR;
  if (shock || (convex && concave)) {
    const double sigma = (f(uR) - f(uL)) / (uR - uL);
    return xi < sigma ? uL : uR;
  }
  const double sL = f.derivative(uL);
  const double sR = f.derivative(uR);
  if (xi <= sL) return uL;
  if (xi >= sR) return uR;
  // Inside the fan f' runs monotonically from sL to sR between uL and uR.
  double a = uL;
  double b = uR;
  for (int it = 0; it < 200 && a != b; ++it) {
    const double m = 0.5 * (a + b);
    if (m == a || m == b) break;
    (f.derivative(m) < xi ? a : b) = m;
  }
  return 0.5 * (a + b);
}

}  // namespace fbcl::oracle
