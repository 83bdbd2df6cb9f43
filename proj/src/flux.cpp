#include "fbcl/flux.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fbcl/errors.hpp"

namespace fbcl {

namespace {

double horner(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

std::vector<double> differentiate(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
  return d;
}

void require_finite(double u, const char* what) {
  if (!std::isfinite(u)) {
    throw DomainError(std::string(what) + ": non-finite amplitude");
  }
}

void validate_domain(const Interval& d) {
  if (!std::isfinite(d.lo) || !std::isfinite(d.hi) || !(d.lo < d.hi)) {
    throw DomainError("flux domain must be a finite interval with lo < hi");
  }
}

}  // namespace

std::vector<double> real_polynomial_roots(const std::vector<double>& coeffs) {
  std::vector<double> c = coeffs;
  while (!c.empty() && c.back() == 0.0) c.pop_back();
  const auto degree = c.empty() ? 0 : static_cast<Eigen::Index>(c.size() - 1);
  std::vector<double> roots;
  if (degree < 1) return roots;
  if (degree == 1) {
    roots.push_back(-c[0] / c[1]);
    return roots;
  }
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (Eigen::Index i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < degree; ++i) {
    companion(i, degree - 1) = -c[static_cast<std::size_t>(i)] / c.back();
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  for (const auto& z : solver.eigenvalues()) {
    if (std::abs(z.imag()) <= 1e-9 * std::max(1.0, std::abs(z.real()))) {
      // One Newton polish on the original polynomial.
      double x = z.real();
      const auto dc = differentiate(c);
      const double d = horner(dc, x);
      if (d != 0.0) x -= horner(c, x) / d;
      roots.push_back(x);
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

Flux Flux::linear(double speed, Interval domain) {
  if (!std::isfinite(speed) || speed < 0.0) {
    throw DomainError("linear flux needs a finite nonnegative speed");
  }
  Flux f;
  f.kind_ = FluxKind::Linear;
  f.p0_ = speed;
  f.finalize(domain);
  return f;
}

Flux Flux::burgers_shifted(double offset, Interval domain) {
  if (!std::isfinite(offset)) throw DomainError("burgers offset must be finite");
  Flux f;
  f.kind_ = FluxKind::BurgersShifted;
  f.p0_ = offset;
  f.stationary_ = {0.0};
  f.finalize(domain);
  return f;
}

Flux Flux::quadratic_plus_one(Interval domain) {
  Flux f;
  f.kind_ = FluxKind::QuadraticPlusOne;
  f.stationary_ = {0.0};
  f.finalize(domain);
  return f;
}

Flux Flux::concave_sat(double lambda, double beta, Interval domain) {
  if (!(lambda > 0.0) || !(beta >= 0.0) || !std::isfinite(lambda) ||
      !std::isfinite(beta)) {
    throw DomainError("concave_sat needs lambda > 0 and beta >= 0");
  }
  Flux f;
  f.kind_ = FluxKind::ConcaveSat;
  f.p0_ = lambda;
  f.p1_ = beta;
  f.speed_critical_ = {0.0};
  f.finalize(domain);
  return f;
}

Flux Flux::polynomial(std::vector<double> coeffs, Interval domain) {
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw DomainError("polynomial coefficients must be finite");
  }
  while (!coeffs.empty() && coeffs.back() == 0.0) coeffs.pop_back();
  if (coeffs.empty()) coeffs.push_back(0.0);
  Flux f;
  f.kind_ = FluxKind::Polynomial;
  f.coeffs_ = std::move(coeffs);
  f.dcoeffs_ = differentiate(f.coeffs_);
  f.ddcoeffs_ = differentiate(f.dcoeffs_);
  f.stationary_ = real_polynomial_roots(f.dcoeffs_);
  f.speed_critical_ = real_polynomial_roots(f.ddcoeffs_);
  f.finalize(domain);
  return f;
}

Flux Flux::truncated(const Flux& inner, double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw DomainError("truncation bound must be positive and finite");
  }
  if (inner.domain().lo >= bound) {
    throw DomainError("truncation bound lies below the inner flux domain");
  }
  Flux f;
  f.kind_ = FluxKind::Truncated;
  f.p0_ = bound;
  f.inner_ = std::make_shared<const Flux>(inner);
  for (double s : inner.stationary_) {
    if (s >= -bound && s <= bound) f.stationary_.push_back(s);
  }
  for (double s : inner.speed_critical_) {
    if (s > -bound && s < bound) f.speed_critical_.push_back(s);
  }
  f.speed_critical_.push_back(-bound);
  f.speed_critical_.push_back(bound);
  std::sort(f.speed_critical_.begin(), f.speed_critical_.end());
  f.finalize({std::clamp(inner.domain().lo, -bound, bound), bound});
  return f;
}

void Flux::finalize(Interval domain) {
  validate_domain(domain);
  domain_ = domain;
  if (kind_ == FluxKind::Polynomial) {
    constexpr int kSamples = 100000;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (int k = 0; k < kSamples; ++k) {
      const double s = domain.lo + domain.width() * k / (kSamples - 1);
      const double d = derivative_unchecked(s);
      lo = std::min(lo, d);
      hi = std::max(hi, std::abs(d));
    }
    a_lower_ = lo - 0.05 * std::abs(lo);
    lip_const_ = 1.05 * hi;
  } else {
    const auto [smin, smax] = speed_range(domain.lo, domain.hi);
    // Negative speeds are allowed here; the solver and the certifiers reject them.
    a_lower_ = smin;
    lip_const_ = std::max(std::abs(smin), std::abs(smax));
    if (kind_ == FluxKind::Truncated) {
      lip_const_ = inner_->max_abs_speed(-p0_, p0_);
    }
  }
  if (kind_ == FluxKind::Truncated) {
    globally_increasing_ = stationary_.empty() && inner_->derivative_unchecked(0.0) > 0.0;
  } else {
    globally_increasing_ = stationary_.empty() && derivative_unchecked(0.0) > 0.0;
  }
}

std::string Flux::tag() const {
  switch (kind_) {
    case FluxKind::Linear: return "linear";
    case FluxKind::BurgersShifted: return "burgers_shifted";
    case FluxKind::QuadraticPlusOne: return "quadratic_plus_one";
    case FluxKind::ConcaveSat: return "concave_sat";
    case FluxKind::Polynomial: return "polynomial";
    case FluxKind::Truncated: return "truncated";
  }
  return "unknown";
}

double Flux::value_unchecked(double u) const {
  switch (kind_) {
    case FluxKind::Linear: return p0_ * u;
    case FluxKind::BurgersShifted: return p0_ + 0.5 * u * u;
    case FluxKind::QuadraticPlusOne: return 1.0 + u * u;
    case FluxKind::ConcaveSat: return p0_ * u / (1.0 + p1_ * std::abs(u));
    case FluxKind::Polynomial: return horner(coeffs_, u);
    case FluxKind::Truncated: {
      const double m = p0_;
      if (u > m) return inner_->value_unchecked(m) + inner_->derivative_unchecked(m) * (u - m);
      if (u < -m) return inner_->value_unchecked(-m) + inner_->derivative_unchecked(-m) * (u + m);
      return inner_->value_unchecked(u);
    }
  }
  return 0.0;
}

double Flux::derivative_unchecked(double u) const {
  switch (kind_) {
    case FluxKind::Linear: return p0_;
    case FluxKind::BurgersShifted: return u;
    case FluxKind::QuadraticPlusOne: return 2.0 * u;
    case FluxKind::ConcaveSat: {
      const double d = 1.0 + p1_ * std::abs(u);
      return p0_ / (d * d);
    }
    case FluxKind::Polynomial: return horner(dcoeffs_, u);
    case FluxKind::Truncated:
      return inner_->derivative_unchecked(std::clamp(u, -p0_, p0_));
  }
  return 0.0;
}

double Flux::operator()(double u) const {
  require_finite(u, "flux eval");
  return value_unchecked(u);
}

double Flux::derivative(double u) const {
  require_finite(u, "flux derivative");
  return derivative_unchecked(u);
}

double Flux::second_derivative(double u) const {
  require_finite(u, "flux second derivative");
  switch (kind_) {
    case FluxKind::Linear: return 0.0;
    case FluxKind::BurgersShifted: return 1.0;
    case FluxKind::QuadraticPlusOne: return 2.0;
    case FluxKind::ConcaveSat: {
      const double d = 1.0 + p1_ * std::abs(u);
      const double sgn = (u > 0.0) - (u < 0.0);
      return -2.0 * p0_ * p1_ * sgn / (d * d * d);
    }
    case FluxKind::Polynomial: return horner(ddcoeffs_, u);
    case FluxKind::Truncated:
      if (u > p0_ || u < -p0_) return 0.0;
      return inner_->second_derivative(u);
  }
  return 0.0;
}

std::pair<double, double> Flux::value_range(double lo, double hi) const {
  if (lo > hi) std::swap(lo, hi);
  double vmin = value_unchecked(lo);
  double vmax = vmin;
  const double vhi = value_unchecked(hi);
  vmin = std::min(vmin, vhi);
  vmax = std::max(vmax, vhi);
  for (double s : stationary_) {
    if (s > lo && s < hi) {
      const double v = value_unchecked(s);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  return {vmin, vmax};
}

std::pair<double, double> Flux::speed_range(double lo, double hi) const {
  if (lo > hi) std::swap(lo, hi);
  double smin = derivative_unchecked(lo);
  double smax = smin;
  const double shi = derivative_unchecked(hi);
  smin = std::min(smin, shi);
  smax = std::max(smax, shi);
  for (double s : speed_critical_) {
    if (s > lo && s < hi) {
      const double d = derivative_unchecked(s);
      smin = std::min(smin, d);
      smax = std::max(smax, d);
    }
  }
  return {smin, smax};
}

double Flux::max_abs_speed(double lo, double hi) const {
  const auto [smin, smax] = speed_range(lo, hi);
  return std::max(std::abs(smin), std::abs(smax));
}

double godunov_flux(const Flux& f, double uL, double uR) {
  require_finite(uL, "godunov_flux");
  require_finite(uR, "godunov_flux");
  if (f.globally_increasing_) return f.value_unchecked(uL);
  if (uL <= uR) return f.value_range(uL, uR).first;
  return f.value_range(uR, uL).second;
}

// ---------------------------------------------------------------------------

namespace {

struct SimpsonState {
  const Flux* flux;
  double eval(double s) const { return 1.0 / flux->derivative(s); }
};

double simpson_recurse(const SimpsonState& st, double a, double b, double fa,
                       double fm, double fb, double whole, double tol,
                       int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = st.eval(lm);
  const double frm = st.eval(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) {
    return left + right + diff / 15.0;
  }
  return simpson_recurse(st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_recurse(st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const SimpsonState& st, double a, double b, double tol) {
  const double fa = st.eval(a);
  const double fb = st.eval(b);
  const double fm = st.eval(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_recurse(st, a, b, fa, fm, fb, whole, tol, 50);
}

}  // namespace

HTransform::HTransform(Flux f, double abs_tol) : flux_(std::move(f)), abs_tol_(abs_tol) {
  if (!(flux_.a_lower() > 0.0)) {
    throw CertificateError("h transform needs a flux with a_lower > 0");
  }
}

double HTransform::integral(double a, double b) const {
  require_finite(a, "h transform");
  require_finite(b, "h transform");
  if (a == b) return 0.0;
  if (b < a) return -integral(b, a);
  // Split at kinks of f' so every panel has a smooth integrand.
  std::vector<double> cuts{a, b};
  std::vector<double> kinks{0.0};
  if (flux_.kind() == FluxKind::Truncated) {
    kinks.push_back(-flux_.bound());
    kinks.push_back(flux_.bound());
  }
  for (double s : kinks) {
    if (s > a && s < b) cuts.push_back(s);
  }
  std::sort(cuts.begin(), cuts.end());
  const SimpsonState st{&flux_};
  double total = 0.0;
  const double tol_each = abs_tol_ / static_cast<double>(cuts.size() - 1);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    total += adaptive_simpson(st, cuts[k], cuts[k + 1], tol_each);
  }
  return total;
}

double HTransform::operator()(double U) const { return integral(0.0, U); }

HTransform h_transform(const Flux& f) { return HTransform(f); }

}  // namespace fbcl
