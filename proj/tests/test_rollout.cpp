#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace mtlqg;
using mtlqg::testing::scalar_task;

TEST(Simulate, NoiselessStaysAtOrigin) {
  const TaskProblem pr = make_problem(scalar_task(0.9), 3);
  LqgTask quiet = pr.task;
  quiet.W.setZero();
  quiet.V.setZero();
  Rng rng(1);
  const Trajectory tr = simulate_trajectory(quiet, pr.lift, pr.optimum.K, 50, rng);
  EXPECT_EQ(tr.X.norm(), 0.0);
  EXPECT_EQ(tr.U.norm(), 0.0);
}

TEST(Simulate, DeterministicGivenSeed) {
  const TaskProblem pr = make_problem(nominal_task(cartpole_distribution(1, 0)), 10);
  Rng a(Rng(7, {1, 2})), b(Rng(7, {1, 2})), c(Rng(7, {1, 3}));
  const Trajectory ta = simulate_trajectory(pr.task, pr.lift, pr.optimum.K, 100, a);
  const Trajectory tb = simulate_trajectory(pr.task, pr.lift, pr.optimum.K, 100, b);
  const Trajectory tc = simulate_trajectory(pr.task, pr.lift, pr.optimum.K, 100, c);
  EXPECT_EQ(ta.X, tb.X);
  EXPECT_EQ(ta.U, tb.U);
  EXPECT_NE(ta.X, tc.X);
}

TEST(Simulate, OpenLoopStationaryVariance) {
  const double a = 0.5, w = 0.2;
  const TaskProblem pr = make_problem(scalar_task(a, 1.0, 1.0, w, 0.1), 2);
  const Matrix K = Matrix::Zero(pr.optimum.K.rows(), pr.optimum.K.cols());
  Rng rng(3);
  const int tau = 400000;
  const Trajectory tr = simulate_trajectory(pr.task, pr.lift, K, tau, rng);
  const double var = tr.X.row(0).tail(tau - 100).squaredNorm() / (tau - 100);
  EXPECT_NEAR(var, w / (1 - a * a), 0.02 * w / (1 - a * a));
}

TEST(Simulate, LongRunCostMatchesExact) {
  const TaskProblem pr = make_problem(scalar_task(0.8, 1.0, 1.0, 0.1, 0.1, 1.0, 0.5), 3);
  const Matrix K = 0.8 * pr.optimum.K;
  Rng rng(4);
  const double Jmc = rollout_cost(pr.task, pr.lift, K, 500000, 3, rng);
  const double J = cost_exact(pr.task, pr.lift, K).J;
  EXPECT_NEAR(Jmc, J, 0.02 * J);
}

TEST(Simulate, DivergenceIsReported) {
  const TaskProblem pr = make_problem(scalar_task(1.5), 2);
  const Matrix K = Matrix::Zero(pr.optimum.K.rows(), pr.optimum.K.cols());
  Rng rng(5);
  try {
    simulate_trajectory(pr.task, pr.lift, K, 1000, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Diverged);
  }
}

TEST(TruncatedCost, HandComputed) {
  Trajectory tr{Matrix::Zero(1, 4), Matrix::Ones(1, 4), Matrix::Constant(1, 4, 2.0)};
  const Matrix I = Matrix::Identity(1, 1);
  EXPECT_DOUBLE_EQ(truncated_cost(tr, I, I, 0), 5.0);
  tr.Y(0, 0) = 10.0;
  EXPECT_DOUBLE_EQ(truncated_cost(tr, I, I, 1), 5.0);
  EXPECT_DOUBLE_EQ(truncated_cost(tr, I, 3.0 * I, 3), 13.0);
  EXPECT_THROW(truncated_cost(tr, I, I, 4), Error);
}

TEST(RadiusSchedule, Examples) {
  EXPECT_NEAR(smoothing_radius_schedule(1.0, 1.0, 1.0, 4.0, 1.0, 2.0 / std::exp(1.0)), std::pow(0.25, 0.25), 1e-15);
  const double r1 = smoothing_radius_schedule(30, 2.0, 100.0, 200, 10, 0.1);
  const double r2 = smoothing_radius_schedule(30, 2.0, 100.0, 200, 160, 0.1);
  EXPECT_NEAR(r1 / r2, 2.0, 1e-12);
  EXPECT_THROW(smoothing_radius_schedule(30, 0.0, 1.0, 1, 1, 0.1), Error);
}

TEST(ZeroOrder, DimensionOfCartPole) {
  const HistoryLift lift = build_s_star(nominal_task(cartpole_distribution(1, 0)), 10);
  EXPECT_EQ(zo_dimension(lift), 30);
}

TEST(ZeroOrder, ZeroCostGivesZeroEstimate) {
  const TaskProblem pr = make_problem(scalar_task(0.5), 3);
  LqgTask t = pr.task;
  t.Q.setZero();
  t.R.setZero();
  RolloutConfig cfg;
  cfg.n_s = 50;
  cfg.tau = 50;
  cfg.r = 0.05;
  const ZoEstimate e = zo_gradient_onepoint(t, pr.lift, pr.optimum.K, cfg, 0, 0);
  EXPECT_EQ(e.grad_hat.norm(), 0.0);
  EXPECT_EQ(e.samples_used, 50);
}

TEST(ZeroOrder, DeterministicAndKeyedByTask) {
  const TaskProblem pr = make_problem(scalar_task(0.5), 3);
  RolloutConfig cfg;
  cfg.n_s = 10;
  cfg.tau = 50;
  cfg.r = 0.05;
  cfg.seed = 11;
  const Matrix g1 = zo_gradient_onepoint(pr.task, pr.lift, pr.optimum.K, cfg, 4, 0).grad_hat;
  const Matrix g2 = zo_gradient_onepoint(pr.task, pr.lift, pr.optimum.K, cfg, 4, 0).grad_hat;
  const Matrix g3 = zo_gradient_onepoint(pr.task, pr.lift, pr.optimum.K, cfg, 4, 1).grad_hat;
  const Matrix g4 = zo_gradient_onepoint(pr.task, pr.lift, pr.optimum.K, cfg, 5, 0).grad_hat;
  EXPECT_EQ(g1, g2);
  EXPECT_NE(g1, g3);
  EXPECT_NE(g1, g4);
}

TEST(ZeroOrder, SingleSampleReconstruction) {
  const TaskProblem pr = make_problem(scalar_task(0.7), 2);
  RolloutConfig cfg;
  cfg.n_s = 1;
  cfg.tau = 40;
  cfg.r = 0.3;
  cfg.seed = 9;
  const Matrix K = 0.5 * pr.optimum.K;
  Rng dir(cfg.seed, {3, 2, 0, 0});
  Matrix U = dir.normal_matrix(K.rows(), K.cols());
  U *= cfg.r / U.norm();
  Rng noise(cfg.seed, {3, 2, 0, 1});
  const double J = rollout_cost(pr.task, pr.lift, K + U, cfg.tau, 2, noise);
  const ZoEstimate e = zo_gradient_onepoint(pr.task, pr.lift, K, cfg, 3, 2);
  const double d = static_cast<double>(zo_dimension(pr.lift));
  EXPECT_NEAR(U.norm(), cfg.r, 1e-15);
  EXPECT_LT((e.grad_hat - d / (cfg.r * cfg.r) * J * U).norm(), 1e-12 * e.grad_hat.norm());
}

namespace {

struct Spread {
  Matrix mean;
  double rmse = 0.0;   // around the exact gradient
  double std_err = 0.0;  // of the mean, Frobenius
};

Spread zo_spread(const TaskProblem& pr, const Matrix& K, const RolloutConfig& base, int reps) {
  const Matrix g = gradient_exact(pr.task, pr.lift, K).grad;
  Spread s;
  s.mean = Matrix::Zero(K.rows(), K.cols());
  std::vector<Matrix> est;
  for (int k = 0; k < reps; ++k) {
    est.push_back(zo_gradient_onepoint(pr.task, pr.lift, K, base, static_cast<std::uint64_t>(k), 0).grad_hat);
    s.mean += est.back();
  }
  s.mean /= reps;
  double sq = 0.0, var = 0.0;
  for (const Matrix& e : est) {
    sq += (e - g).squaredNorm();
    var += (e - s.mean).squaredNorm();
  }
  s.rmse = std::sqrt(sq / reps);
  s.std_err = std::sqrt(var / (reps - 1) / reps);
  return s;
}

}  // namespace

TEST(ZeroOrder, ErrorShrinksWithSamples) {
  const TaskProblem pr = make_problem(scalar_task(0.8, 1.0, 1.0, 0.1, 0.1), 2);
  const Matrix K = 0.5 * pr.optimum.K;
  RolloutConfig cfg;
  cfg.tau = 100;
  cfg.r = 0.05;
  cfg.n_s = 25;
  const double small = zo_spread(pr, K, cfg, 30).rmse;
  cfg.n_s = 400;
  const double large = zo_spread(pr, K, cfg, 30).rmse;
  // rmse ~ n_s^{-1/2}: the ratio should be near 4.
  EXPECT_GT(small / large, 2.5);
  EXPECT_LT(small / large, 6.5);
}

TEST(ZeroOrder, MeanTracksExactGradient) {
  const TaskProblem pr = make_problem(scalar_task(0.8, 1.0, 1.0, 0.1, 0.1), 2);
  const Matrix K = 0.5 * pr.optimum.K;
  RolloutConfig cfg;
  cfg.tau = 200;
  cfg.r = 0.05;
  cfg.n_s = 2000;
  const Spread s = zo_spread(pr, K, cfg, 40);
  const Matrix g = gradient_exact(pr.task, pr.lift, K).grad;
  EXPECT_LT((s.mean - g).norm(), 4.0 * s.std_err + 0.05 * g.norm())
      << "std_err " << s.std_err << " |g| " << g.norm();
}

TEST(ZeroOrder, DestabilizingPerturbationIsIndexed) {
  const TaskProblem pr = make_problem(scalar_task(0.5), 2);
  RolloutConfig cfg;
  cfg.tau = 2000;
  cfg.n_s = 5;
  cfg.r = 50.0;
  try {
    zo_gradient_onepoint(pr.task, pr.lift, pr.optimum.K, cfg, 0, 0);
    FAIL();
  } catch (const IndexedError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PerturbationDestabilizes);
    EXPECT_GE(e.index(), 0);
  }
}
