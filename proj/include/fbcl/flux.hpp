#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace fbcl {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

enum class FluxKind {
  Linear,            // f(u) = speed * u
  BurgersShifted,    // f(u) = offset + u^2 / 2
  QuadraticPlusOne,  // f(u) = 1 + u^2
  ConcaveSat,        // f(u) = lambda * u / (1 + beta * |u|)
  Polynomial,        // f(u) = sum_k c_k u^k
  Truncated,         // inner on [-M, M], tangent-line continuation outside
};

/// Scalar flux f_i with analytic derivatives and speed bounds.
///
/// `a_lower()` (possibly negative) and `lip_const()` are the minimum and the maximum absolute value
/// of f' over `domain()`. They are analytic for every kind except Polynomial,
/// where they come from 1e5 samples with a 5% safety margin and
/// `bounds_certified()` is false. For Truncated, `lip_const()` is the global
/// Lipschitz constant of the continued flux.
///
/// Flux values are immutable and safe to share between threads.
class Flux {
 public:
  static Flux linear(double speed, Interval domain = {-100.0, 100.0});
  static Flux burgers_shifted(double offset, Interval domain = {0.0, 1.0});
  static Flux quadratic_plus_one(Interval domain = {1.0, 1000.0});
  static Flux concave_sat(double lambda, double beta,
                          Interval domain = {-10.0, 10.0});
  /// Coefficients in ascending order: c_0 + c_1 u + c_2 u^2 + ...
  static Flux polynomial(std::vector<double> coeffs, Interval domain);
  static Flux truncated(const Flux& inner, double bound);

  FluxKind kind() const { return kind_; }
  std::string tag() const;

  /// f(u). Throws DomainError for non-finite u.
  double operator()(double u) const;
  double derivative(double u) const;
  double second_derivative(double u) const;

  double a_lower() const { return a_lower_; }
  double lip_const() const { return lip_const_; }
  const Interval& domain() const { return domain_; }
  bool bounds_certified() const { return kind_ != FluxKind::Polynomial; }
  /// f' >= a_lower > 0 on the declared domain.
  bool strictly_increasing() const { return a_lower_ > 0.0; }

  /// min and max of f over [lo, hi].
  std::pair<double, double> value_range(double lo, double hi) const;
  /// min and max of f' over [lo, hi].
  std::pair<double, double> speed_range(double lo, double hi) const;
  double max_abs_speed(double lo, double hi) const;

  // Kind parameters.
  double speed() const { return p0_; }
  double offset() const { return p0_; }
  double lambda() const { return p0_; }
  double beta() const { return p1_; }
  double bound() const { return p0_; }
  const std::vector<double>& coeffs() const { return coeffs_; }
  const Flux& inner() const { return *inner_; }

 private:
  Flux() = default;
  void finalize(Interval domain);
  double value_unchecked(double u) const;
  double derivative_unchecked(double u) const;

  FluxKind kind_ = FluxKind::Linear;
  double p0_ = 0.0;
  double p1_ = 0.0;
  std::vector<double> coeffs_;
  std::vector<double> dcoeffs_;
  std::vector<double> ddcoeffs_;
  std::shared_ptr<const Flux> inner_;

  Interval domain_;
  double a_lower_ = 0.0;
  double lip_const_ = 0.0;
  // Real points where f' = 0 (stationary) and where f' has an extremum or kink.
  std::vector<double> stationary_;
  std::vector<double> speed_critical_;
  bool globally_increasing_ = false;

  friend double godunov_flux(const Flux& f, double uL, double uR);
};

/// Godunov numerical flux: min of f on [uL, uR] if uL <= uR, max of f on
/// [uR, uL] otherwise. Reduces to f(uL) for globally increasing fluxes.
double godunov_flux(const Flux& f, double uL, double uR);

/// h(U) = integral_0^U ds / f'(s), evaluated by adaptive Simpson quadrature.
class HTransform {
 public:
  /// Throws CertificateError when f.a_lower() <= 0.
  explicit HTransform(Flux f, double abs_tol = 1e-10);

  double operator()(double U) const;
  /// integral_a^b ds / f'(s)
  double integral(double a, double b) const;
  /// Lower slope bound 1 / lip_const: alpha * U <= h(U) for U >= 0.
  double alpha() const { return 1.0 / flux_.lip_const(); }
  /// Upper slope bound 1 / a_lower: h(U) <= beta * U for U >= 0.
  double beta() const { return 1.0 / flux_.a_lower(); }
  const Flux& flux() const { return flux_; }

 private:
  Flux flux_;
  double abs_tol_;
};

HTransform h_transform(const Flux& f);

/// Real roots of the polynomial sum_k c_k x^k (ascending coefficients).
std::vector<double> real_polynomial_roots(const std::vector<double>& coeffs);

}  // namespace fbcl
