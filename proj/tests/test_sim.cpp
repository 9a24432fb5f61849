#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chaincart/ddp.hpp"
#include "chaincart/sim.hpp"
#include "test_util.hpp"

using namespace chaincart;
using namespace chaincart::testing;

namespace {

struct FourLink {
  ChainCartParams p = four_link_params();
  EquilibriumConfig eq = EquilibriumConfig::hanging(4);
  LinearModel lm = linearize(p, eq);
  MatrixXd f = solve_ddp(lm).friend_matrix;
  MatrixXd open = MatrixXd::Zero(2, 20);
};

const FourLink& four_link() {
  static const FourLink fl;
  return fl;
}

double peak_norm(const std::vector<Vector2d>& series) {
  double m = 0.0;
  for (const auto& v : series) m = std::max(m, v.norm());
  return m;
}

}  // namespace

TEST(Signal, Values) {
  const auto step = DisturbanceSignal::step(Vector2d(1, 2), 0.5);
  EXPECT_EQ(step(0.4), Vector2d::Zero());
  EXPECT_EQ(step(0.5), Vector2d(1, 2));
  const auto sine = DisturbanceSignal::sine(Vector2d(1, 0), 0.5);
  EXPECT_NEAR(sine(0.5)(0), 1.0, 1e-15);
  EXPECT_EQ(DisturbanceSignal::none()(3.0), Vector2d::Zero());
  EXPECT_THROW(DisturbanceSignal::sine(Vector2d(1, 0), 0.0).validate(), std::invalid_argument);
  EXPECT_THROW(DisturbanceSignal::step(Vector2d(NAN, 0)).validate(), std::invalid_argument);
}

TEST(StepCount, FloorWithRoundingGuard) {
  EXPECT_EQ(step_count(20.0, 1e-3), 20000);
  EXPECT_EQ(step_count(1.0, 0.1), 10);
  EXPECT_EQ(step_count(1.05, 0.1), 10);
  EXPECT_EQ(step_count(0.3, 0.1), 3);
  EXPECT_THROW(step_count(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(step_count(0.01, 0.1), std::invalid_argument);
}

TEST(SimulateLinear, ZeroInputStaysZero) {
  const auto& fl = four_link();
  const Trajectory tr = simulate_linear(fl.lm, fl.f, DisturbanceSignal::none(), VectorXd::Zero(20), 1.0, 1e-2);
  ASSERT_EQ(tr.size(), 101u);
  for (const auto& x : tr.states) EXPECT_TRUE(x.isZero(0.0));
  EXPECT_EQ(tr.outputs.size(), tr.times.size());
  EXPECT_EQ(tr.states.size(), tr.times.size());
}

TEST(SimulateLinear, UniformTimeGrid) {
  const auto& fl = four_link();
  const Trajectory tr = simulate_linear(fl.lm, fl.open, DisturbanceSignal::none(), VectorXd::Zero(20), 2.0, 1e-3);
  for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_NEAR(tr.times[k] - tr.times[k - 1], 1e-3, 1e-12);
}

TEST(SimulateLinear, FriendDecouplesStepDisturbance) {
  const auto& fl = four_link();
  const auto w = DisturbanceSignal::step(Vector2d(1, 0));
  const Trajectory with = simulate_linear(fl.lm, fl.f, w, VectorXd::Zero(20), 10.0, 1e-3);
  const Trajectory without = simulate_linear(fl.lm, fl.open, w, VectorXd::Zero(20), 10.0, 1e-3);
  EXPECT_GT(peak_norm(without.outputs), 1e-3);
  EXPECT_LT(peak_norm(with.outputs), 1e-6 * peak_norm(without.outputs));
}

TEST(SimulateLinear, RejectsBadShapes) {
  const auto& fl = four_link();
  EXPECT_THROW(simulate_linear(fl.lm, fl.f, DisturbanceSignal::none(), VectorXd::Zero(19), 1.0, 0.1),
               std::invalid_argument);
  EXPECT_THROW(simulate_linear(fl.lm, MatrixXd::Zero(2, 19), DisturbanceSignal::none(), VectorXd::Zero(20), 1.0, 0.1),
               std::invalid_argument);
}

TEST(SimulateLinear, DivergenceIsReported) {
  LinearModel lm;
  lm.A = MatrixXd::Identity(1, 1) * 800.0;
  lm.B = MatrixXd::Zero(1, 1);
  lm.E = MatrixXd::Zero(1, 2);
  lm.H = MatrixXd::Identity(1, 1);
  lm.layout = StateLayout{0};
  EXPECT_THROW(simulate_linear(lm, MatrixXd::Zero(1, 1), DisturbanceSignal::none(), VectorXd::Ones(1), 10.0, 0.1),
               SimulationError);
}

TEST(SimulateLinear, BitIdenticalReruns) {
  const auto& fl = four_link();
  const auto w = DisturbanceSignal::sine(Vector2d(1, 0.5), 0.5);
  const Trajectory a = simulate_linear(fl.lm, fl.f, w, VectorXd::Zero(20), 2.0, 1e-3);
  const Trajectory b = simulate_linear(fl.lm, fl.f, w, VectorXd::Zero(20), 2.0, 1e-3);
  for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(a.states[k], b.states[k]);
}

TEST(SimulateLinear, FourthOrderConvergence) {
  const auto& fl = four_link();
  std::mt19937_64 rng(1);
  const VectorXd x0 = 0.01 * random_matrix(rng, 20, 1);
  const auto w = DisturbanceSignal::sine(Vector2d(1, 0), 0.5);
  const double dt = 0.02, t_end = 2.0;
  const VectorXd ref = simulate_linear(fl.lm, fl.open, w, x0, t_end, dt / 8).states.back();
  const double e1 = (simulate_linear(fl.lm, fl.open, w, x0, t_end, dt).states.back() - ref).norm();
  const double e2 = (simulate_linear(fl.lm, fl.open, w, x0, t_end, dt / 2).states.back() - ref).norm();
  EXPECT_GE(e1 / e2, 8.0);
  EXPECT_LE(e1 / e2, 32.0);
}

TEST(SimulateNonlinear, EquilibriumIsConstant) {
  const auto& fl = four_link();
  const Trajectory tr = simulate_nonlinear(fl.p, zero_controller(), DisturbanceSignal::none(),
                                           equilibrium_state(fl.p, fl.eq), 1.0, 1e-2);
  for (const auto& y : tr.states) EXPECT_LT((y - tr.states.front()).norm(), 1e-14);
}

TEST(SimulateNonlinear, FreeMotionConservesEnergyAndManifold) {
  const auto& fl = four_link();
  std::mt19937_64 rng(2);
  const NonlinearState init = state_from_linear(fl.p, fl.eq, 0.3 * random_matrix(rng, 20, 1));
  const Trajectory tr = simulate_nonlinear(fl.p, zero_controller(), DisturbanceSignal::none(), init, 5.0, 1e-3);
  const double e0 = energy(fl.p, init);
  double drift = 0.0, norm_err = 0.0, tangent_err = 0.0;
  for (std::size_t k = 0; k < tr.size(); k += 50) {
    const NonlinearState st = nonlinear_state_at(tr, k, 4);
    drift = std::max(drift, std::abs(energy(fl.p, st) - e0) / std::abs(e0));
    for (std::size_t i = 0; i < 4; ++i) {
      norm_err = std::max(norm_err, std::abs(st.q[i].norm() - 1.0));
      tangent_err = std::max(tangent_err, std::abs(st.q[i].dot(st.omega[i])));
    }
  }
  EXPECT_LT(drift, 1e-6);
  EXPECT_LT(norm_err, 1e-9);
  EXPECT_LT(tangent_err, 1e-9);
}

TEST(SimulateNonlinear, RejectsMismatchedState) {
  const auto& fl = four_link();
  const NonlinearState init = equilibrium_state(ChainCartParams::uniform(2), EquilibriumConfig::hanging(2));
  EXPECT_THROW(simulate_nonlinear(fl.p, zero_controller(), DisturbanceSignal::none(), init, 1.0, 0.1),
               std::invalid_argument);
}

TEST(SimulateNonlinear, SmallDisturbanceMatchesLinearModel) {
  // A weak step on the cart: nonlinear and linear outputs agree to second order.
  const auto& fl = four_link();
  const auto w = DisturbanceSignal::step(Vector2d(0.01, 0.0));
  const Trajectory nl = simulate_nonlinear(fl.p, zero_controller(), w, equilibrium_state(fl.p, fl.eq), 2.0, 1e-3);
  const Trajectory lin = simulate_linear(fl.lm, fl.open, w, VectorXd::Zero(20), 2.0, 1e-3);
  double gap = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < nl.size(); ++k) {
    gap = std::max(gap, (nl.outputs[k] - lin.outputs[k]).norm());
    scale = std::max(scale, lin.outputs[k].norm());
  }
  EXPECT_GT(scale, 1e-4);
  EXPECT_LT(gap, 1e-2 * scale);
}

TEST(DifferenceExperiment, ZeroSignalGivesZeroSeries) {
  const auto& fl = four_link();
  const DifferenceSeries d = difference_experiment(fl.lm, fl.f, DisturbanceSignal::none(), 1.0, 1e-2);
  for (std::size_t k = 0; k < d.times.size(); ++k) {
    EXPECT_TRUE(d.with_feedback[k].isZero(0.0));
    EXPECT_TRUE(d.without_feedback[k].isZero(0.0));
  }
}

TEST(DifferenceExperiment, FeedbackRemovesDisturbanceFromOutput) {
  const auto& fl = four_link();
  for (const auto& w : {DisturbanceSignal::step(Vector2d(1, 0)), DisturbanceSignal::sine(Vector2d(1, 0), 0.5),
                        DisturbanceSignal::step(Vector2d(0.3, -0.7))}) {
    const DifferenceSeries d = difference_experiment(fl.lm, fl.f, w, 20.0, 1e-3);
    const double without = peak_norm(d.without_feedback);
    EXPECT_GT(without, 1e-3) << w.describe();
    EXPECT_LE(peak_norm(d.with_feedback), 1e-6 * without) << w.describe();
  }
}

TEST(DifferenceExperiment, AxisSwapPermutesOutputs) {
  // A quarter turn J about e3 maps the model to itself, so rotating w by J rotates y by J.
  const auto& fl = four_link();
  const auto dx = difference_experiment(fl.lm, fl.open, DisturbanceSignal::step(Vector2d(1, 0)), 5.0, 1e-3);
  const auto dy = difference_experiment(fl.lm, fl.open, DisturbanceSignal::step(Vector2d(0, 1)), 5.0, 1e-3);
  const double scale = peak_norm(dx.without_feedback);
  ASSERT_GT(scale, 1e-3);
  for (std::size_t k = 0; k < dx.times.size(); ++k) {
    const Vector2d a = dx.without_feedback[k], b = dy.without_feedback[k];
    EXPECT_NEAR(b(0), -a(1), 1e-12 * scale);
    EXPECT_NEAR(b(1), a(0), 1e-12 * scale);
  }
}

TEST(LinkPositionSeries, ZeroAndDecoupledAndOpenLoop) {
  const auto& fl = four_link();
  const auto zero = simulate_linear(fl.lm, fl.f, DisturbanceSignal::none(), VectorXd::Zero(20), 1.0, 1e-2);
  for (const auto& v : link_position_series(zero, fl.lm)) EXPECT_TRUE(v.isZero(0.0));

  const auto w = DisturbanceSignal::step(Vector2d(1, 0));
  const auto open = simulate_linear(fl.lm, fl.open, w, VectorXd::Zero(20), 10.0, 1e-3);
  const auto closed = simulate_linear(fl.lm, fl.f, w, VectorXd::Zero(20), 10.0, 1e-3);
  const double open_peak = peak_norm(link_position_series(open, fl.lm));
  EXPECT_GT(open_peak, 1e-3);
  EXPECT_LT(peak_norm(link_position_series(closed, fl.lm)), 1e-6 * open_peak);

  const LinearModel other = linearize(ChainCartParams::uniform(2), EquilibriumConfig::hanging(2));
  EXPECT_THROW(link_position_series(open, other), std::invalid_argument);
}

TEST(LinearizationGap, SecondOrderWithAndWithoutFeedback) {
  const auto& fl = four_link();
  std::mt19937_64 rng(3);
  VectorXd dir = VectorXd::Zero(20);
  dir.tail(8) = random_matrix(rng, 8, 1);
  dir /= dir.norm();
  for (const auto& f : {std::optional<MatrixXd>{}, std::optional<MatrixXd>{fl.f}}) {
    const double g1 = linearization_gap(fl.p, fl.eq, dir, 1e-2, 1.0, 1e-3, f).direction_gap;
    const double g2 = linearization_gap(fl.p, fl.eq, dir, 5e-3, 1.0, 1e-3, f).direction_gap;
    EXPECT_GE(g1 / g2, 3.0) << (f ? "friend" : "free");
    EXPECT_LE(g1 / g2, 5.0) << (f ? "friend" : "free");
  }
}
