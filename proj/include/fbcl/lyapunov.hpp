#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fbcl/flux.hpp"
#include "fbcl/solver.hpp"

namespace fbcl {

/// dx sum_j sum_i p_i e^{-mu x_j} |u_ij|, x_j the cell centers.
double v_l1(const GridState& s, const Eigen::VectorXd& p, double mu);
/// As v_l1 with |h_i(u_ij)| in place of |u_ij|.
double v_l1_h(const GridState& s, const Eigen::VectorXd& p, double mu,
              std::span<const HTransform> h);
/// max_i max_j Delta_i e^{-nu x_j} |u_ij|.
double v_linf(const GridState& s, const Eigen::VectorXd& delta, double nu);
/// (dx sum_j sum_i (Delta_i e^{-nu x_j} u_ij)^{2m})^{1/(2m)}, accumulated in
/// log space.
double v_l2m(const GridState& s, const Eigen::VectorXd& delta, double nu, int m);

enum class FunctionalKind { L1Weighted, L1HWeighted, LinfWeighted, L2mWeighted };

std::string to_string(FunctionalKind k);

/// One functional with its parameters. `weights` is p for the L1 kinds and
/// Delta for the others; `rate` is mu or nu.
struct Functional {
  FunctionalKind kind = FunctionalKind::L1Weighted;
  Eigen::VectorXd weights;
  double rate = 0.0;
  int m = 1;
  std::vector<HTransform> h;

  double operator()(const GridState& s) const;
  nlohmann::json params() const;
};

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

struct LyapunovSeries {
  std::string label;
  FunctionalKind kind = FunctionalKind::L1Weighted;
  std::vector<double> times;
  std::vector<double> values;
  double window_lo = 0.0;
  double window_hi = 0.0;
  DecayFit fit;
};

LyapunovSeries evaluate_series(const Functional& V, std::span<const GridState> trajectory);

/// Least-squares slope of ln V against t on [lo, hi]. Points with
/// V < 1e-14 V(0) are dropped; throws PreconditionError with fewer than 5 left.
DecayFit fit_decay(std::span<const double> times, std::span<const double> values, double lo,
                   double hi);
/// Fits on the default window [0.2 T, 0.9 T] and stores the result.
void fit_default_window(LyapunovSeries& series);

struct DecayCheck {
  /// Largest V(t2) e^{r t2} / (V(t1) e^{r t1}) over recorded t1 < t2, minus 1.
  double worst_growth = 0.0;
  bool passed = true;
};

/// V(t2) <= V(t1) e^{-rate (t2 - t1)} (1 + rel_tol) for every recorded pair.
DecayCheck check_decay(std::span<const double> times, std::span<const double> values,
                       double rate, double rel_tol);

/// V(t_{k+1}) <= V(t_k) + tol * V(t_0) for all k.
bool is_nonincreasing(std::span<const double> values, double tol = 1e-10);

/// Smallest m0 <= m_max such that V_m is nonincreasing along the trajectory for
/// every m in [m0, m_max]; 0 when even m_max fails.
int empirical_m0(std::span<const GridState> trajectory, const Eigen::VectorXd& delta, double nu,
                 int m_max = 64);

/// sup_t V(t) e^{gamma t} / V(0).
double empirical_constant(std::span<const double> times, std::span<const double> values,
                          double gamma);

/// max_i Delta_i / (min_i Delta_i e^{-nu}): bounds both sides of the
/// equivalence between v_linf and the sup norm.
double linf_equivalence_constant(const Eigen::VectorXd& delta, double nu);

void write_lyapunov_csv(const std::string& path, std::span<const LyapunovSeries> series);

}  // namespace fbcl
