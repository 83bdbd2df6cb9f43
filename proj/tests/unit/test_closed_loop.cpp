#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fbcl/closed_loop.hpp"
#include "fbcl/errors.hpp"

using namespace fbcl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

VectorXd v1(double a) { return VectorXd::Constant(1, a); }
FeedbackMap gain(double k) { return FeedbackMap::linear(MatrixXd::Constant(1, 1, k)); }

double trace_at(const TraceSeries& tr, double t) {
  const auto it = std::lower_bound(tr.times.begin(), tr.times.end(), t);
  return tr.outflow[static_cast<std::size_t>(it - tr.times.begin())](0);
}

}  // namespace

TEST(SlabSchedule, ClampsLastSlab) {
  const SlabSchedule s = SlabSchedule::make(0.4, 1.0);
  ASSERT_EQ(s.slabs(), 3u);
  EXPECT_DOUBLE_EQ(s.t[1], 0.4);
  EXPECT_DOUBLE_EQ(s.t.back(), 1.0);
}

TEST(Direct, ZeroFeedbackIsOpenLoop) {
  const Grid g = Grid::make(100);
  const std::vector<Flux> f{Flux::concave_sat(1.0, 1.0)};
  const GridState u0 = GridState::from_functions({[](double x) { return std::cos(3 * x); }}, g);
  const ClosedLoopRun c = run_direct(f, gain(0.0), u0, 1.5, g);
  const RunResult o = run_open_loop(f, u0, constant_inflow(v1(0.0)), 1.5, g);
  EXPECT_EQ((c.final_state().values - o.final_state.values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Direct, HalfGainPlateaus) {
  const Grid g = Grid::make(800);
  const std::vector<Flux> f{Flux::linear(1.0)};
  const ClosedLoopRun r = run_direct(f, gain(0.5), GridState::constant(v1(1.0), g), 3.0, g);
  EXPECT_NEAR(trace_at(r.traces(), 0.5), 1.0, 1e-9);
  EXPECT_NEAR(trace_at(r.traces(), 1.5), 0.5, 1e-6);
  EXPECT_NEAR(trace_at(r.traces(), 2.5), 0.25, 1e-3);
  for (double res : r.feedback_residual) EXPECT_EQ(res, 0.0);
}

TEST(Direct, ZeroIsEquilibrium) {
  const Grid g = Grid::make(64);
  const std::vector<Flux> f{Flux::concave_sat(1.0, 2.0), Flux::linear(0.5)};
  const FeedbackMap G = FeedbackMap::componentwise(MatrixXd::Ones(2, 2), {ScalarMap::tanh(3.0), ScalarMap::linear(-2.0)});
  const ClosedLoopRun r = run_direct(f, G, GridState::constant(VectorXd::Zero(2), g), 2.0, g);
  for (const auto& s : r.run.trajectory) EXPECT_EQ(s.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MethodOfSteps, SingleSlabWithoutFeedbackIsOpenLoop) {
  const Grid g = Grid::make(100);
  const std::vector<Flux> f{Flux::linear(1.0)};
  const GridState u0 = GridState::from_functions({[](double x) { return x * (1 - x); }}, g);
  const ClosedLoopRun m = run_method_of_steps(f, gain(0.0), u0, 0.5, g, zero_inflow(1));
  ASSERT_EQ(m.schedule->slabs(), 1u);
  const RunResult o = run_open_loop(f, u0, zero_inflow(1), 0.5, g);
  EXPECT_EQ((m.final_state().values - o.final_state.values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MethodOfSteps, AgreesWithDirectAndIgnoresDummy) {
  const Grid g = Grid::make(200);
  const std::vector<Flux> f{Flux::concave_sat(1.0, 0.5), Flux::linear(1.5)};
  MatrixXd K(2, 2);
  K << 0.0, 0.7, -0.5, 0.2;
  const FeedbackMap G = FeedbackMap::linear(K);
  const GridState u0 = GridState::from_functions(
      {[](double x) { return std::sin(kPi * x); }, [](double x) { return x < 0.3 ? -0.5 : 0.4; }}, g);
  const ClosedLoopRun d = run_direct(f, G, u0, 2.5, g);
  const ClosedLoopRun m0 = run_method_of_steps(f, G, u0, 2.5, g, zero_inflow(2));
  const ClosedLoopRun m1 = run_method_of_steps(f, G, u0, 2.5, g, [](double t) {
    VectorXd w(2);
    w << 3.0 * std::sin(11 * t), 1.0;
    return w;
  });
  EXPECT_GT(m0.schedule->slabs(), 2u);
  EXPECT_LE(l1_distance(d.final_state(), m0.final_state(), g).sum(), 20 * g.dx);
  EXPECT_LE(l1_distance(m0.final_state(), m1.final_state(), g).sum(), 10 * g.dx);
}

TEST(Delay, IdenticalInputs) {
  const Grid g = Grid::make(100);
  const std::vector<Flux> f{Flux::concave_sat(1.0, 1.0)};
  const Inflow w = [](double t) { return v1(std::sin(t)); };
  const auto r = delay_independence_test(f, GridState::constant(v1(0.2), g), w, w, 0.0, g);
  EXPECT_EQ(r.deviation, 0.0);
}

TEST(Delay, UnitCflHasNoLeakage) {
  const Grid g = Grid::make(200, 1.0);
  const std::vector<Flux> f{Flux::linear(1.0)};
  const auto u0 = GridState::from_functions({[](double x) { return std::pow(std::sin(kPi * x), 2); }}, g);
  const auto r = delay_independence_test(f, u0, zero_inflow(1), constant_inflow(v1(1.0)), 0.0, g);
  EXPECT_DOUBLE_EQ(r.delta_bar, 1.0);
  EXPECT_EQ(r.deviation, 0.0);
}

TEST(Delay, LeakageVanishesUnderRefinement) {
  const std::vector<Flux> f{Flux::linear(1.0)};
  DelayTestOptions opt;
  opt.window_fraction = 0.9;
  double prev = INFINITY;
  for (int N : {400, 1600}) {
    const Grid g = Grid::make(N, 0.5);
    const auto u0 = GridState::from_functions({[](double x) { return std::pow(std::sin(kPi * x), 2); }}, g);
    const auto r = delay_independence_test(f, u0, zero_inflow(1), constant_inflow(v1(1.0)), 0.0, g, opt);
    EXPECT_LT(r.deviation, 0.1 * prev);
    prev = r.deviation;
  }
  EXPECT_LE(prev, 1e-6);
}

TEST(Delay, RejectsInputsThatDifferEarly) {
  const Grid g = Grid::make(100);
  const std::vector<Flux> f{Flux::linear(1.0)};
  EXPECT_THROW(delay_independence_test(f, GridState::constant(v1(0.0), g), zero_inflow(1),
                                       [](double t) { return v1(t > 0.2 ? 1.0 : 0.0); }, 0.5, g),
               PreconditionError);
}

// The boundary fronts are shocks: inflow 2A meets state A at speed
// (f(2A) - f(A)) / A = 3A, so traversal k takes 1 / (3 c 2^k) and the levels
// sum to 2 / (3c).
TEST(Blowup, MatchesShockTraversalSeries) {
  for (double c : {1.0, 2.0}) {
    const auto r = detect_blowup(c, 4096.0, 2.0, Grid::make(800));
    ASSERT_TRUE(r.t_blow.has_value());
    EXPECT_NEAR(*r.t_blow, 2.0 / (3.0 * c), 0.1 * 2.0 / (3.0 * c));
    ASSERT_GE(r.traversals.size(), 3u);
    EXPECT_NEAR(r.traversals[1].time, 1.0 / (3.0 * c), 0.02);
  }
}

TEST(Blowup, ContractionDoesNotBlowUp) {
  BlowupOptions opt;
  opt.gain = 0.5;
  const auto r = detect_blowup(1.0, 4096.0, 2.0, Grid::make(400), opt);
  EXPECT_FALSE(r.t_blow.has_value());
}
