#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fbcl/errors.hpp"
#include "fbcl/lyapunov.hpp"

using namespace fbcl;
using Eigen::VectorXd;

namespace {

GridState constant_state(VectorXd c, int N) {
  GridState s;
  s.values = c.replicate(1, N);
  return s;
}

GridState random_state(std::mt19937_64& rng, int n, int N) {
  std::normal_distribution<double> Z;
  GridState s;
  s.values.resize(n, N);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < N; ++j) s.values(i, j) = Z(rng);
  return s;
}

VectorXd ones(int n) { return VectorXd::Ones(n); }

}  // namespace

TEST(VL1, ConstantState) {
  const double c = 0.7, mu = 0.9;
  const GridState s = constant_state(VectorXd::Constant(1, c), 400);
  // midpoint rule on e^{-mu x}: relative error mu^2 dx^2 / 24
  EXPECT_NEAR(v_l1(s, ones(1), mu), c * (1 - std::exp(-mu)) / mu, 1e-6);
  EXPECT_EQ(v_l1(constant_state(VectorXd::Zero(2), 40), ones(2), mu), 0.0);
}

TEST(VL1, SmallRateLimit) {
  std::mt19937_64 rng(1);
  const GridState s = random_state(rng, 2, 200);
  VectorXd p(2);
  p << 1.0, 0.3;
  const double plain = (p.transpose() * s.values.cwiseAbs()).sum() / 200.0;
  EXPECT_NEAR(v_l1(s, p, 1e-8), plain, 1e-6 * plain);
}

TEST(VL1H, LinearAndConcave) {
  std::mt19937_64 rng(2);
  const GridState s = random_state(rng, 1, 100);
  const std::vector<HTransform> h{h_transform(Flux::linear(2.0))};
  EXPECT_NEAR(v_l1_h(s, ones(1), 0.5, h), v_l1(s, VectorXd::Constant(1, 0.5), 0.5), 1e-12);

  const std::vector<HTransform> hc{h_transform(Flux::concave_sat(1.0, 1.0, {0.0, 1.0}))};
  const double mu = 0.4;
  EXPECT_NEAR(v_l1_h(constant_state(ones(1), 400), ones(1), mu, hc), (1 - std::exp(-mu)) / mu * 7.0 / 3.0, 1e-6);
}

TEST(VLinf, ConstantState) {
  const double nu = 0.3;
  EXPECT_NEAR(v_linf(constant_state(VectorXd::Constant(1, 2.0), 500), ones(1), nu), 2.0, 2.0 * nu / 1000.0 + 1e-15);
}

TEST(VL2m, ReducesToL2) {
  std::mt19937_64 rng(3);
  const GridState s = random_state(rng, 1, 64);
  const double l2 = std::sqrt(s.values.squaredNorm() / 64.0);
  EXPECT_NEAR(v_l2m(s, ones(1), 1e-12, 1), l2, 1e-10);
  EXPECT_EQ(v_l2m(constant_state(VectorXd::Zero(1), 8), ones(1), 0.1, 3), 0.0);
}

TEST(VL2m, SandwichAndLimit) {
  std::mt19937_64 rng(4);
  VectorXd delta(3);
  delta << 1.0, 2.0, 0.5;
  const double nu = 0.4;
  for (int trial = 0; trial < 10; ++trial) {
    const GridState s = random_state(rng, 3, 128);
    for (int m : {1, 4, 64}) {
      double acc = 0.0;
      for (int j = 0; j < 128; ++j) {
        double M = 0.0;
        for (int i = 0; i < 3; ++i) M = std::max(M, delta(i) * std::exp(-nu * (j + 0.5) / 128) * std::abs(s.values(i, j)));
        acc += std::pow(M, 2 * m) / 128.0;
      }
      const double norm = std::pow(acc, 1.0 / (2 * m));
      const double V = v_l2m(s, delta, nu, m);
      EXPECT_GE(V, norm * (1 - 1e-12));
      EXPECT_LE(V, std::pow(3.0, 1.0 / (2 * m)) * norm * (1 + 1e-12));
    }
    const double vinf = v_linf(s, delta, nu);
    EXPECT_LE(v_l2m(s, delta, nu, 64), std::pow(3.0, 1.0 / 128) * vinf * (1 + 1e-12));
  }
  // no overflow for large amplitudes
  EXPECT_TRUE(std::isfinite(v_l2m(constant_state(VectorXd::Constant(1, 1e200), 16), ones(1), 0.1, 64)));
}

TEST(FitDecay, ExactExponentials) {
  std::vector<double> t, v, w;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.05 * k);
    v.push_back(std::exp(-2.0 * t.back()));
    w.push_back(3.0 * std::exp(-0.7 * t.back()));
  }
  const DecayFit a = fit_decay(t, v, 1.0, 4.5);
  EXPECT_NEAR(a.slope, -2.0, 1e-9);
  EXPECT_NEAR(a.r2, 1.0, 1e-12);
  const DecayFit b = fit_decay(t, w, 0.0, 5.0);
  EXPECT_NEAR(b.slope, -0.7, 1e-9);
  EXPECT_NEAR(b.intercept, std::log(3.0), 1e-9);
  EXPECT_THROW(fit_decay(t, v, 1.0, 1.1), PreconditionError);
}

TEST(DecayCheck, ToleranceAndViolation) {
  std::vector<double> t{0, 1, 2, 3}, v{1.0, std::exp(-1.0), std::exp(-2.0), std::exp(-3.0)};
  EXPECT_TRUE(check_decay(t, v, 1.0, 1e-12).passed);
  EXPECT_FALSE(check_decay(t, v, 1.2, 1e-3).passed);
  v[2] *= 1.01;
  const DecayCheck c = check_decay(t, v, 1.0, 1e-3);
  EXPECT_FALSE(c.passed);
  EXPECT_NEAR(c.worst_growth, 0.01, 1e-9);
  EXPECT_TRUE(is_nonincreasing(std::vector<double>{3, 2, 2, 1}));
  EXPECT_FALSE(is_nonincreasing(std::vector<double>{3, 2, 2.1}));
}

TEST(EmpiricalM0, DecreasingTrajectory) {
  std::vector<GridState> traj;
  std::mt19937_64 rng(6);
  const GridState base = random_state(rng, 2, 32);
  for (int k = 0; k < 5; ++k) {
    GridState s = base;
    s.values *= std::pow(0.8, k);
    traj.push_back(s);
  }
  EXPECT_EQ(empirical_m0(traj, ones(2), 0.2, 16), 1);
  std::swap(traj[1], traj[3]);
  EXPECT_EQ(empirical_m0(traj, ones(2), 0.2, 16), 0);
}

TEST(Functional, Dispatch) {
  std::mt19937_64 rng(7);
  const GridState s = random_state(rng, 2, 50);
  VectorXd p(2);
  p << 0.5, 1.5;
  Functional V{FunctionalKind::L2mWeighted, p, 0.3, 3, {}};
  EXPECT_DOUBLE_EQ(V(s), v_l2m(s, p, 0.3, 3));
  V.kind = FunctionalKind::LinfWeighted;
  EXPECT_DOUBLE_EQ(V(s), v_linf(s, p, 0.3));
  EXPECT_EQ(V.params()["nu"], 0.3);
}
