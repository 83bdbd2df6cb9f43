#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbcl/flux.hpp"

namespace fbcl {

/// Scalar Lipschitz map with g(0) = 0, used componentwise after a mixing
/// matrix.
class ScalarMap {
 public:
  enum class Kind { Linear, Tanh, Saturation, Table };

  static ScalarMap linear(double gain);
  /// gain * tanh(y)
  static ScalarMap tanh(double gain);
  /// clamp(gain * y, -limit, limit)
  static ScalarMap saturation(double gain, double limit);
  /// Piecewise-linear interpolation through (knots, values), continued
  /// linearly beyond the end knots.
  static ScalarMap table(std::vector<double> knots, std::vector<double> values);

  double operator()(double y) const;
  double lip_const() const { return lip_; }
  Kind kind() const { return kind_; }

 private:
  ScalarMap() = default;
  Kind kind_ = Kind::Linear;
  double gain_ = 0.0;
  double limit_ = 0.0;
  double lip_ = 0.0;
  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Boundary map G: R^n -> R^n with G(0) = 0 and a global Lipschitz constant
/// in |.|_inf. Construction evaluates G(0) and rejects maps that miss the
/// origin.
class FeedbackMap {
 public:
  enum class Kind { LinearMatrix, ScaledComponentwise, Custom };
  using Callable = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  static FeedbackMap linear(Eigen::MatrixXd K);
  static FeedbackMap componentwise(Eigen::MatrixXd mixing, std::vector<ScalarMap> maps);
  static FeedbackMap custom(int n, Callable fn, double lip_const);

  /// G(y); DimensionError when y.size() != size().
  Eigen::VectorXd operator()(const Eigen::VectorXd& y) const;

  Kind kind() const { return kind_; }
  int size() const { return n_; }
  double lip_const() const { return lip_; }
  /// K for LinearMatrix, the mixing matrix for ScaledComponentwise.
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  /// G'(0): exact for LinearMatrix, central differences (step 1e-6) otherwise.
  Eigen::MatrixXd jacobian_at_zero() const;

 private:
  FeedbackMap() = default;
  void check_origin() const;

  Kind kind_ = Kind::LinearMatrix;
  int n_ = 0;
  double lip_ = 0.0;
  Eigen::MatrixXd matrix_;
  std::vector<ScalarMap> maps_;
  Callable custom_;
};

enum class Norm { L1, Linf };

enum class Condition {
  CondStab,             // sum_i p_i (|f_i(y_i)-f_i(0)| e^-mu - |f_i(G_i(y))-f_i(0)|) >= 0
  CondStabL1Weighted,   // |Delta G(z)|_1 <= e^-mu |Delta z|_1
  CondStabLinfWeighted  // |Delta G(z)|_inf <= e^-mu |Delta z|_inf
};

enum class Verdict { PassSampled, FailWithWitness };

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Box symmetric(int n, double radius);
  int size() const { return static_cast<int>(lo.size()); }
};

/// Outcome of a sampled check of one dissipativity condition. A pass means
/// "no violation among the samples", never a proof.
struct Certificate {
  Condition condition = Condition::CondStab;
  Verdict verdict = Verdict::PassSampled;
  std::optional<Eigen::VectorXd> witness;
  double mu = 0.0;
  Eigen::VectorXd weights;
  Box box;
  std::size_t samples = 0;
  double min_margin = 0.0;

  bool passed() const { return verdict == Verdict::PassSampled; }
};

/// Margins at or above -kMarginTolerance count as satisfied.
inline constexpr double kMarginTolerance = 1e-12;

std::string to_string(Condition c);
std::string to_string(Verdict v);
nlohmann::json to_json(const Certificate& c);

/// Halton points of the box, followed by all 2^n corners and the 2n points
/// where the coordinate axes meet the box faces. The origin is never
/// included.
std::vector<Eigen::VectorXd> sample_box(const Box& box, std::size_t samples);

/// Left side of the flux-dependent condition at one point y.
double condstab_margin(std::span<const Flux> fluxes, const FeedbackMap& G,
                       const Eigen::VectorXd& p, double mu, const Eigen::VectorXd& y);

/// e^-mu |Delta z|_norm - |Delta G(z)|_norm at one point z.
double contraction_margin(const FeedbackMap& G, const Eigen::VectorXd& delta, double mu,
                          Norm norm, const Eigen::VectorXd& z);

Certificate check_condstab(std::span<const Flux> fluxes, const FeedbackMap& G,
                           const Eigen::VectorXd& p, double mu, const Box& box,
                           std::size_t samples);

Certificate check_weighted_contraction(const FeedbackMap& G, const Eigen::VectorXd& delta,
                                       double mu, Norm norm, const Box& box,
                                       std::size_t samples);

/// Largest mu in (0, mu_cap] for which `passes(mu)` holds, by bisection to
/// `tol`. Returns 0 if it fails already at tol, and mu_cap if it never fails.
double largest_certified_rate(const std::function<bool(double)>& passes, double tol = 1e-4,
                              double mu_cap = 50.0);

/// Induced matrix norm |K|_1 (max column sum) or |K|_inf (max row sum).
double induced_norm(const Eigen::MatrixXd& K, Norm p);
/// |Delta K Delta^-1|_p for a positive diagonal given as a vector.
double scaled_norm(const Eigen::MatrixXd& K, const Eigen::VectorXd& delta, Norm p);

struct RhoResult {
  double value = 0.0;
  /// Minimizing diagonal, normalized so that scaling(0) == 1.
  Eigen::VectorXd scaling;
};

/// inf over positive diagonal Delta of |Delta K Delta^-1|_p.
///
/// Works in log coordinates with Delta_0 = 1 fixed. The objective is a max of
/// sums of exponentials of affine functions, so it is convex there. A
/// log-sum-exp smoothing with a decreasing temperature is minimized by exact
/// coordinate line searches, and a Nelder-Mead pass on the unsmoothed
/// objective polishes the result. Log-scalings are confined to [-40, 40],
/// which resolves unattained infima to about 1e-17.
RhoResult rho_p(const Eigen::MatrixXd& K, Norm p);

/// min_i f_i'(0) * (-ln rho_inf(G'(0))), or 0 when rho_inf >= 1.
double corollary_rate_bound(std::span<const Flux> fluxes, const FeedbackMap& G);

}  // namespace fbcl
