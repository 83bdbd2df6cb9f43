#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fbcl/errors.hpp"
#include "fbcl/feedback.hpp"
#include "fbcl/oracle.hpp"

using namespace fbcl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd m2(double a, double b, double c, double d) {
  MatrixXd K(2, 2);
  K << a, b, c, d;
  return K;
}

FeedbackMap scalar_gain(double k) { return FeedbackMap::linear(MatrixXd::Constant(1, 1, k)); }

}  // namespace

TEST(FeedbackMap, Evaluation) {
  const FeedbackMap G = FeedbackMap::linear(m2(0.0, 0.5, 0.5, 0.0));
  EXPECT_TRUE(G(VectorXd::Ones(2)).isApprox(VectorXd::Constant(2, 0.5)));
  EXPECT_DOUBLE_EQ(scalar_gain(2.0)(VectorXd::Constant(1, 3.0))(0), 6.0);
  const FeedbackMap T = FeedbackMap::componentwise(m2(0.0, 1.0, 1.0, 0.0), {ScalarMap::tanh(1.0), ScalarMap::saturation(2.0, 0.5)});
  EXPECT_EQ(T(VectorXd::Zero(2)), VectorXd::Zero(2));
  EXPECT_NEAR(T(VectorXd::Ones(2))(0), std::tanh(1.0), 1e-15);
  EXPECT_DOUBLE_EQ(T(VectorXd::Ones(2))(1), 0.5);
  EXPECT_DOUBLE_EQ(T.lip_const(), 2.0);
}

TEST(FeedbackMap, RejectsNonzeroOrigin) {
  EXPECT_THROW(FeedbackMap::custom(1, [](const VectorXd& y) -> VectorXd { return y.array() + 1.0; }, 1.0), DomainError);
  EXPECT_THROW(FeedbackMap::linear(MatrixXd::Zero(2, 3)), DimensionError);
}

TEST(FeedbackMap, JacobianAtZero) {
  const FeedbackMap T = FeedbackMap::componentwise(m2(0.0, 0.8, 0.6, 0.0), {ScalarMap::tanh(1.0), ScalarMap::tanh(0.9)});
  EXPECT_TRUE(T.jacobian_at_zero().isApprox(m2(0.0, 0.8, 0.54, 0.0), 1e-8));
}

TEST(CondStab, ScalarLinearThreshold) {
  const std::vector<Flux> f{Flux::linear(1.0)};
  const VectorXd p = VectorXd::Ones(1);
  const Box box = Box::symmetric(1, 2.0);
  EXPECT_TRUE(check_condstab(f, scalar_gain(0.5), p, 0.6, box, 256).passed());
  const Certificate fail = check_condstab(f, scalar_gain(0.6), p, 0.6, box, 256);
  EXPECT_FALSE(fail.passed());
  ASSERT_TRUE(fail.witness.has_value());
  EXPECT_LT(condstab_margin(f, scalar_gain(0.6), p, 0.6, *fail.witness), 0.0);
  EXPECT_TRUE(check_condstab(f, scalar_gain(0.0), p, 7.0, box, 256).passed());
}

TEST(CondStab, ScalarSweepMatchesAlgebra) {
  const std::vector<Flux> f{Flux::linear(1.0)};
  for (double k = -0.9; k <= 0.9; k += 0.15) {
    for (double mu = 0.1; mu <= 1.5; mu += 0.2) {
      const bool expect = std::abs(k) <= std::exp(-mu);
      EXPECT_EQ(check_condstab(f, scalar_gain(k), VectorXd::Ones(1), mu, Box::symmetric(1, 1.0), 64).passed(), expect)
          << "k=" << k << " mu=" << mu;
    }
  }
}

TEST(WeightedContraction, ReferenceCases) {
  const FeedbackMap G = FeedbackMap::linear(m2(0.0, 0.4, 0.4, 0.0));
  EXPECT_TRUE(check_weighted_contraction(G, VectorXd::Ones(2), 0.5, Norm::Linf, Box::symmetric(2, 1.0), 512).passed());
  EXPECT_FALSE(check_weighted_contraction(scalar_gain(2.0), VectorXd::Ones(1), 0.1, Norm::L1, Box::symmetric(1, 1.0), 64).passed());
}

TEST(WeightedContraction, SamplesIncludeCorners) {
  const auto pts = sample_box(Box::symmetric(3, 1.0), 16);
  int corners = 0;
  for (const auto& z : pts) corners += (z.cwiseAbs().array() == 1.0).all();
  EXPECT_EQ(corners, 8);
}

TEST(Certificate, JsonShape) {
  const std::vector<Flux> f{Flux::linear(1.0)};
  const auto j = to_json(check_condstab(f, scalar_gain(0.6), VectorXd::Ones(1), 0.6, Box::symmetric(1, 1.0), 32));
  for (const char* key : {"condition", "verdict", "witness", "params", "box", "samples", "min_margin"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["verdict"], "FailWithWitness");
}

TEST(LargestRate, Bisection) {
  const double mu = largest_certified_rate([](double m) { return m <= 0.7; });
  EXPECT_NEAR(mu, 0.7, 1e-4);
  EXPECT_LE(mu, 0.7);
}

TEST(RhoP, ReferenceValues) {
  EXPECT_NEAR(rho_p(m2(0.5, 0.0, 0.0, 0.3), Norm::Linf).value, 0.5, 1e-10);
  const RhoResult r = rho_p(m2(0.0, 0.8, 0.2, 0.0), Norm::Linf);
  EXPECT_NEAR(r.value, 0.4, 1e-10);
  EXPECT_NEAR(scaled_norm(m2(0.0, 0.8, 0.2, 0.0), r.scaling, Norm::Linf), r.value, 1e-12);
  EXPECT_DOUBLE_EQ(r.scaling(0), 1.0);
  EXPECT_LT(rho_p(m2(0.0, 2.0, 0.0, 0.0), Norm::Linf).value, 1e-8);
}

TEST(RhoP, InvariantUnderDiagonalSimilarity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0), L(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const int n = 2 + k % 3;
    MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K(i, j) = U(rng);
    VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = std::exp(L(rng));
    const MatrixXd S = d.asDiagonal() * K * d.cwiseInverse().asDiagonal();
    for (Norm p : {Norm::L1, Norm::Linf}) {
      EXPECT_NEAR(rho_p(S, p).value, rho_p(K, p).value, 1e-6);
      EXPECT_LE(rho_p(K, p).value, induced_norm(K, p) + 1e-12);
    }
  }
}

TEST(RhoP, AgreesWithSpectralCrossCheck) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    MatrixXd K(3, 3);
    for (int i = 0; i < 9; ++i) K(i) = U(rng);
    EXPECT_NEAR(rho_p(K, Norm::Linf).value, oracle::spectral_radius_abs(K), 1e-8);
    EXPECT_NEAR(rho_p(K, Norm::L1).value, oracle::spectral_radius_abs(K), 1e-8);
  }
}

TEST(CorollaryBound, PlugIn) {
  const std::vector<Flux> lin{Flux::linear(1.0), Flux::linear(1.0)};
  const double e1 = std::exp(-1.0);
  EXPECT_NEAR(corollary_rate_bound(lin, FeedbackMap::linear(m2(e1, 0.0, 0.0, e1))), 1.0, 1e-8);
  const std::vector<Flux> f{Flux::linear(2.0), Flux::linear(3.0)};
  EXPECT_NEAR(corollary_rate_bound(f, FeedbackMap::linear(m2(0.0, 0.8, 0.3125, 0.0))), 2.0 * std::log(2.0), 1e-8);
  EXPECT_EQ(corollary_rate_bound(f, FeedbackMap::linear(m2(1.0, 0.0, 0.0, 0.5))), 0.0);
}
