#pragma once

// Exact lifted cost, closed-form policy gradient and gradient-dominance
// constant. The estimate evolves as x_hat+ = A_K x_hat + nu with
// A_K = A + B K_tilde S^+ and Cov(nu) = Sigma_nu.

#include <cmath>
#include <limits>
#include <string>

#include "mtlqg/lifting.hpp"
#include "mtlqg/random.hpp"

namespace mtlqg {

struct CostReport {
  double J = 0.0;
  Matrix P_K;      // value matrix, P = Qk + A_K' P A_K
  Matrix Sigma_K;  // estimate covariance, S = Sigma_nu + A_K S A_K'
  double offset = 0.0;
  double rho = 0.0;  // spectral radius of A_K
};

struct GradientReport {
  Matrix grad;
  Matrix E_K;
  double norm_F = 0.0;
  CostReport cost;
};

inline void require_stabilizing(const LqgTask& task, double rho) {
  if (!(rho < 1.0)) {
    throw Error(ErrorKind::NotStabilizing,
                "controller does not stabilize task '" + task.id + "' (rho = " + std::to_string(rho) + ")");
  }
}

namespace detail {

inline Matrix output_weight(const LqgTask& task) {
  return symmetrize(task.C.transpose() * task.Q * task.C);
}

inline double cost_offset(const LqgTask& task, const HistoryLift& lift) {
  return (output_weight(task) * lift.filter.Sigma_e).trace() + (task.Q * task.V).trace();
}

}  // namespace detail

inline double closed_loop_radius(const LqgTask& task, const HistoryLift& lift, const Matrix& K) {
  return spectral_radius(closed_loop_matrix(task, lift, K));
}

inline CostReport cost_exact(const LqgTask& task, const HistoryLift& lift, const Matrix& K) {
  const Matrix AK = closed_loop_matrix(task, lift, K);
  CostReport out;
  out.rho = spectral_radius(AK);
  require_stabilizing(task, out.rho);
  const Matrix Kx = K * lift.S_dagger;
  const Matrix Qk = symmetrize(detail::output_weight(task) + Kx.transpose() * task.R * Kx);
  out.Sigma_K = dlyap(AK, lift.filter.Sigma_nu);
  out.P_K = dlyap(AK.transpose(), Qk);
  out.offset = detail::cost_offset(task, lift);
  out.J = (Qk * out.Sigma_K).trace() + out.offset;
  return out;
}

inline GradientReport gradient_exact(const LqgTask& task, const HistoryLift& lift, const Matrix& K) {
  GradientReport out;
  out.cost = cost_exact(task, lift, K);
  const Matrix Kx = K * lift.S_dagger;
  const Matrix BtP = task.B.transpose() * out.cost.P_K;
  out.E_K = 2.0 * ((task.R + BtP * task.B) * Kx + BtP * task.A);
  out.grad = out.E_K * out.cost.Sigma_K * lift.S_dagger.transpose();
  out.norm_F = out.grad.norm();
  return out;
}

/// Relative floor below which lambda_min(Sigma_nu) counts as zero. Sigma_nu
/// has rank at most n_y, so it is singular whenever n_y < n_x.
inline constexpr double kSingularCovarianceTol = 1e-12;

inline double gradient_dominance_constant(const LqgTask& task, const HistoryLift& lift) {
  const LiftedController Ks = lifted_optimal_controller(task, lift);
  const Matrix AK = closed_loop_matrix(task, lift, Ks.K);
  require_stabilizing(task, spectral_radius(AK));
  const Matrix& Snu = lift.filter.Sigma_nu;
  double lmin = min_eigenvalue(Snu);
  if (lmin <= kSingularCovarianceTol * spectral_norm(Snu)) lmin = 0.0;
  const Matrix Sigma_star = dlyap(AK, Snu);
  return 4.0 * lmin * lmin * min_eigenvalue(task.R) /
         (spectral_norm(Sigma_star) * spectral_norm(lift.S_star));
}

/// A task with its lift, optimal lifted controller and reference quantities.
struct TaskProblem {
  LqgTask task;
  HistoryLift lift;
  LiftedController optimum;
  double J_star = 0.0;
  double gamma = 0.0;
  Matrix Sigma_star;  // estimate covariance under the optimum
};

inline TaskProblem make_problem(const LqgTask& task, int p) {
  TaskProblem pr;
  pr.task = task;
  pr.lift = build_s_star(task, p);
  pr.optimum = lifted_optimal_controller(task, pr.lift);
  const CostReport c = cost_exact(task, pr.lift, pr.optimum.K);
  pr.J_star = c.J;
  pr.Sigma_star = c.Sigma_K;
  pr.gamma = gradient_dominance_constant(task, pr.lift);
  return pr;
}

inline double optimality_gap(const TaskProblem& pr, const Matrix& K) {
  return cost_exact(pr.task, pr.lift, K).J - pr.J_star;
}

inline double optimality_gap(const LqgTask& task, const HistoryLift& lift, const Matrix& K) {
  const LiftedController Ks = lifted_optimal_controller(task, lift);
  return cost_exact(task, lift, K).J - cost_exact(task, lift, Ks.K).J;
}

/// Central finite-difference gradient of cost_exact.
inline Matrix gradient_fd(const LqgTask& task, const HistoryLift& lift, const Matrix& K, double h = 1e-5) {
  Matrix g(K.rows(), K.cols());
  Matrix Kp = K;
  for (Eigen::Index j = 0; j < K.cols(); ++j) {
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
      const double k0 = K(i, j);
      Kp(i, j) = k0 + h;
      const double jp = cost_exact(task, lift, Kp).J;
      Kp(i, j) = k0 - h;
      const double jm = cost_exact(task, lift, Kp).J;
      Kp(i, j) = k0;
      g(i, j) = (jp - jm) / (2.0 * h);
    }
  }
  return g;
}

/// Local smoothness estimate: power iteration on Hessian-vector products
/// formed from central differences of the exact gradient.
inline double estimate_smoothness(const LqgTask& task, const HistoryLift& lift, const Matrix& K,
                                  Rng& rng, int iterations = 50) {
  const double h = 1e-5 * (1.0 + K.norm());
  Matrix v = rng.normal_matrix(K.rows(), K.cols());
  v /= v.norm();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Matrix gp = gradient_exact(task, lift, K + h * v).grad;
    const Matrix gm = gradient_exact(task, lift, K - h * v).grad;
    Matrix hv = (gp - gm) / (2.0 * h);
    const double nrm = hv.norm();
    if (!(nrm > 0.0)) return 0.0;
    lambda = nrm;
    v = hv / nrm;
  }
  return lambda;
}

}  // namespace mtlqg
