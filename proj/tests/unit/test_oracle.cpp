#include <gtest/gtest.h>

#include <cmath>

#include "fbcl/errors.hpp"
#include "fbcl/oracle.hpp"

using namespace fbcl;
using namespace fbcl::oracle;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LinearClosedLoopSpec scalar_half() {
  LinearClosedLoopSpec s;
  s.lambda = VectorXd::Ones(1);
  s.K = MatrixXd::Constant(1, 1, 0.5);
  s.u0 = {[](double) { return 1.0; }};
  return s;
}

MatrixXd m2(double a, double b, double c, double d) {
  MatrixXd K(2, 2);
  K << a, b, c, d;
  return K;
}

}  // namespace

TEST(ExactLinear, HandTracedValues) {
  const auto s = scalar_half();
  EXPECT_DOUBLE_EQ(exact_linear_eval(s, 0.5, 0.25)(0), 0.5);
  EXPECT_DOUBLE_EQ(exact_linear_eval(s, 0.0, 0.3)(0), 1.0);
  for (double t : {0.7, 1.3, 2.2, 3.9}) {
    for (double x : {0.05, 0.5, 0.65}) {
      if (t <= x) continue;
      EXPECT_DOUBLE_EQ(exact_linear_eval(s, t, x)(0), std::pow(0.5, std::floor(t - x) + 1)) << t << " " << x;
    }
  }
}

TEST(ExactLinear, TwoComponentsCrossCoupled) {
  LinearClosedLoopSpec s;
  s.lambda.resize(2);
  s.lambda << 1.0, 2.0;
  s.K = m2(0.0, 0.3, 0.6, 0.0);
  s.u0 = {[](double) { return 1.0; }, [](double) { return 1.0; }};
  // component 1 enters at t = 0.5 carrying 0.3 u_2(0.5, 1) = 0.3 u0_2(0)
  // component 2 enters at t = 0.625 carrying 0.6 u_1(0.625, 1) = 0.6 u0_1(0.375)
  const VectorXd u = exact_linear_eval(s, 0.75, 0.25);
  EXPECT_DOUBLE_EQ(u(0), 0.3);
  EXPECT_DOUBLE_EQ(u(1), 0.6);
}

TEST(ExactLinear, DepthLimit) {
  try {
    exact_linear_eval(scalar_half(), 10.0, 0.1, 3);
    FAIL() << "expected DepthError";
  } catch (const DepthError& e) {
    EXPECT_EQ(e.required_depth(), 11);
  }
}

TEST(ExactLinear, CellAverages) {
  const MatrixXd c = exact_linear_cells(scalar_half(), 1.5, 8);
  // two reflections for x < 0.5, one beyond
  EXPECT_DOUBLE_EQ(c(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(c(0, 7), 0.5);
}

TEST(BruteForceRho, ReferenceValues) {
  EXPECT_NEAR(brute_force_rho(m2(0.5, 0, 0, 0.3), Norm::Linf), 0.5, 1e-9);
  EXPECT_NEAR(brute_force_rho(m2(0, 0.8, 0.2, 0), Norm::Linf), 0.4, 1e-6);
  EXPECT_NEAR(brute_force_rho(m2(0, 0.8, 0.2, 0), Norm::L1), 0.4, 1e-6);
  const double narrow = brute_force_rho(m2(0, 2, 0, 0), Norm::Linf, 41, {-3, 3});
  const double wide = brute_force_rho(m2(0, 2, 0, 0), Norm::Linf, 41, {-8, 8});
  EXPECT_NEAR(narrow, 2 * std::exp(-3.0), 1e-9);
  EXPECT_LT(wide, narrow);
}

TEST(SpectralRadiusAbs, Values) {
  EXPECT_NEAR(spectral_radius_abs(m2(0, 0.8, -0.2, 0)), 0.4, 1e-12);
  EXPECT_NEAR(spectral_radius_abs(m2(-0.5, 0, 0, 0.3)), 0.5, 1e-12);
}

TEST(Riemann, ShockRarefactionConstant) {
  const Flux b = Flux::burgers_shifted(2.0);
  EXPECT_EQ(riemann_exact(b, 1.0, 0.0, 1.0, 0.49), 1.0);
  EXPECT_EQ(riemann_exact(b, 1.0, 0.0, 1.0, 0.51), 0.0);
  EXPECT_EQ(riemann_exact(b, 0.4, 0.4, 1.0, -3.0), 0.4);
  for (double x : {-0.2, 0.0, 0.3, 0.75, 1.0, 1.4}) {
    EXPECT_NEAR(riemann_exact(b, 0.0, 1.0, 2.0, 2.0 * x), std::clamp(x, 0.0, 1.0), 1e-12);
  }
  // concave flux: increasing jump is a shock, decreasing is a fan
  const Flux c = Flux::concave_sat(1.0, 1.0, {0.0, 2.0});
  const double sigma = (c(1.0) - c(0.0)) / 1.0;
  EXPECT_EQ(riemann_exact(c, 0.0, 1.0, 1.0, sigma - 1e-9), 0.0);
  EXPECT_EQ(riemann_exact(c, 0.0, 1.0, 1.0, sigma + 1e-9), 1.0);
  const double mid = riemann_exact(c, 1.0, 0.0, 1.0, 0.5);
  EXPECT_NEAR(c.derivative(mid), 0.5, 1e-10);
}
