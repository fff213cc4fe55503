#pragma once

#include <cmath>
#include <string>

#include "mtlqg/mtlqg.hpp"

namespace mtlqg::testing {

/// Random n x n matrix rescaled to spectral radius `rho`.
inline Matrix random_with_radius(Rng& rng, Eigen::Index n, double rho) {
  Matrix A = rng.normal_matrix(n, n);
  const double r = spectral_radius(A);
  return r > 0.0 ? Matrix(A * (rho / r)) : A;
}

inline Matrix random_spd(Rng& rng, Eigen::Index n, double floor = 0.1) {
  const Matrix G = rng.normal_matrix(n, n);
  return symmetrize(G * G.transpose() / static_cast<double>(n) + floor * Matrix::Identity(n, n));
}

/// Random task satisfying the rank conditions; open-loop radius in [0.5, 1.2).
inline LqgTask random_task(Rng& rng, Eigen::Index nx, Eigen::Index nu, Eigen::Index ny,
                           const std::string& id = "rand") {
  for (;;) {
    LqgTask t;
    t.id = id;
    t.A = random_with_radius(rng, nx, rng.uniform(0.5, 1.2));
    t.B = rng.normal_matrix(nx, nu);
    t.C = rng.normal_matrix(ny, nx);
    t.W = random_spd(rng, nx, 0.05);
    t.V = random_spd(rng, ny, 0.05);
    t.Q = random_spd(rng, ny, 0.1);
    t.R = random_spd(rng, nu, 0.1);
    const RankTest rt = check_ctrb_obsv(t.A, t.B, t.C);
    if (rt.controllable && rt.observable) return t;
  }
}

inline LqgTask scalar_task(double a, double b = 1.0, double c = 1.0, double w = 0.1, double v = 0.1,
                           double q = 1.0, double r = 1.0) {
  LqgTask t;
  t.id = "scalar";
  t.A = Matrix::Constant(1, 1, a);
  t.B = Matrix::Constant(1, 1, b);
  t.C = Matrix::Constant(1, 1, c);
  t.W = Matrix::Constant(1, 1, w);
  t.V = Matrix::Constant(1, 1, v);
  t.Q = Matrix::Constant(1, 1, q);
  t.R = Matrix::Constant(1, 1, r);
  return t;
}

/// A controller near the lifted optimum that still stabilizes the task.
inline Matrix perturbed_stabilizing(Rng& rng, const TaskProblem& pr, double scale) {
  for (;;) {
    const Matrix D = rng.normal_matrix(pr.optimum.K.rows(), pr.optimum.K.cols());
    const Matrix K = pr.optimum.K + scale * pr.optimum.K.norm() * D / D.norm();
    if (closed_loop_radius(pr.task, pr.lift, K) < 0.98) return K;
    scale *= 0.5;
  }
}

inline double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace mtlqg::testing

namespace mtlqg::testing {

/// Two nearby tasks and a controller (the first task's optimum, possibly
/// perturbed) that stabilizes both.
struct TaskPair {
  TaskProblem a, b;
  Matrix K;
};

inline LqgTask perturb_task(Rng& rng, const LqgTask& t, double scale) {
  LqgTask o = t;
  o.A += scale * rng.normal_matrix(t.nx(), t.nx());
  o.B += scale * rng.normal_matrix(t.nx(), t.nu());
  o.C += scale * rng.normal_matrix(t.ny(), t.nx());
  o.id = t.id + "'";
  return o;
}

inline TaskPair random_pair(Rng& rng, Eigen::Index nx, Eigen::Index nu, Eigen::Index ny, int p, double spread,
                            double controller_noise = 0.05) {
  for (;;) {
    try {
      const LqgTask t = random_task(rng, nx, nu, ny, "a");
      LqgTask u = perturb_task(rng, t, spread);
      validate_task(u);
      TaskPair pair{make_problem(t, p), make_problem(u, p), Matrix()};
      pair.K = pair.a.optimum.K;
      if (controller_noise > 0) {
        const Matrix D = rng.normal_matrix(pair.K.rows(), pair.K.cols());
        pair.K += controller_noise * pair.K.norm() * D / D.norm();
      }
      const double ra = closed_loop_radius(pair.a.task, pair.a.lift, pair.K);
      const double rb = closed_loop_radius(pair.b.task, pair.b.lift, pair.K);
      if (ra < 0.97 && rb < 0.97) return pair;
    } catch (const Error&) {
    }
  }
}

}  // namespace mtlqg::testing
