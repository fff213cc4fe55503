#pragma once

// Stochastic simulation under lifted controllers and the one-point
// zeroth-order gradient estimator.

#include <cmath>
#include <cstdint>
#include <string>

#include "mtlqg/lqg_cost.hpp"
#include "mtlqg/random.hpp"

namespace mtlqg {

inline constexpr double kDivergenceThreshold = 1e9;

struct RolloutConfig {
  int tau = 200;
  int n_c = 1;
  int n_s = 200;
  double r = 1e-3;
  std::uint64_t seed = 0;
  int burn_in = -1;  // negative means p

  int effective_burn_in(int p) const { return burn_in < 0 ? p : burn_in; }

  void validate(int p) const {
    if (tau < 1 || n_c < 1 || n_s < 1) throw Error(ErrorKind::Validation, "rollout: tau, n_c, n_s must be positive");
    if (!(r > 0.0)) throw Error(ErrorKind::Validation, "rollout: smoothing radius must be positive");
    if (effective_burn_in(p) >= tau) {
      throw Error(ErrorKind::Validation, "rollout: horizon must exceed the burn-in");
    }
  }
};

/// Columns are time steps 0..tau-1.
struct Trajectory {
  Matrix X, Y, U;
};

namespace detail {

struct NoiseFactors {
  Matrix W, V;
  explicit NoiseFactors(const LqgTask& t) : W(covariance_factor(t.W)), V(covariance_factor(t.V)) {}
};

/// Core loop shared by simulate_trajectory and rollout_cost. At each step the
/// measurement noise is drawn before the process noise.
template <class Visit>
void run_closed_loop(const LqgTask& task, const HistoryLift& lift, const Matrix& K, int tau,
                     const NoiseFactors& nf, Rng& rng, Visit&& visit) {
  check_controller_dims(lift, K);
  HistoryBuffer hist(lift.p, task.nu(), task.ny());
  Vector x = Vector::Zero(task.nx());
  for (int t = 0; t < tau; ++t) {
    const Vector y = task.C * x + nf.V * rng.normal_vector(task.ny());
    hist.push_output(y);
    const Vector u = K * hist.z();
    hist.push_input(u);
    visit(t, x, y, u);
    x = task.A * x + task.B * u + nf.W * rng.normal_vector(task.nx());
    if (!(x.norm() <= kDivergenceThreshold)) {
      throw Error(ErrorKind::Diverged, "task '" + task.id + "': state norm exceeded 1e9 at step " +
                                           std::to_string(t + 1));
    }
  }
}

}  // namespace detail

inline Trajectory simulate_trajectory(const LqgTask& task, const HistoryLift& lift, const Matrix& K, int tau,
                                      Rng& rng) {
  if (tau < 1) throw Error(ErrorKind::Validation, "simulate_trajectory: tau must be positive");
  Trajectory tr;
  tr.X.resize(task.nx(), tau);
  tr.Y.resize(task.ny(), tau);
  tr.U.resize(task.nu(), tau);
  const detail::NoiseFactors nf(task);
  detail::run_closed_loop(task, lift, K, tau, nf, rng, [&](int t, const Vector& x, const Vector& y, const Vector& u) {
    tr.X.col(t) = x;
    tr.Y.col(t) = y;
    tr.U.col(t) = u;
  });
  return tr;
}

/// Per-step average of y'Qy + u'Ru over steps t >= burn_in.
inline double truncated_cost(const Trajectory& tr, const Matrix& Q, const Matrix& R, int burn_in) {
  const Eigen::Index tau = tr.Y.cols();
  if (burn_in < 0 || tau < burn_in + 1) {
    throw Error(ErrorKind::Validation, "truncated_cost: trajectory shorter than burn-in + 1");
  }
  double acc = 0.0;
  for (Eigen::Index t = burn_in; t < tau; ++t) {
    acc += tr.Y.col(t).dot(Q * tr.Y.col(t)) + tr.U.col(t).dot(R * tr.U.col(t));
  }
  return acc / static_cast<double>(tau - burn_in);
}

/// truncated_cost of a fresh rollout without storing the trajectory.
inline double rollout_cost(const LqgTask& task, const HistoryLift& lift, const Matrix& K, int tau, int burn_in,
                           Rng& rng) {
  if (burn_in < 0 || tau < burn_in + 1) {
    throw Error(ErrorKind::Validation, "rollout_cost: horizon shorter than burn-in + 1");
  }
  const detail::NoiseFactors nf(task);
  double acc = 0.0;
  detail::run_closed_loop(task, lift, K, tau, nf, rng, [&](int t, const Vector&, const Vector& y, const Vector& u) {
    if (t >= burn_in) acc += y.dot(task.Q * y) + u.dot(task.R * u);
  });
  return acc / static_cast<double>(tau - burn_in);
}

/// r = sqrt(d J / L) (n_s N / log(2/delta))^{-1/4}.
inline double smoothing_radius_schedule(double d, double L_hat, double J_bar_hat, double n_s, double N,
                                        double delta) {
  if (!(d > 0 && L_hat > 0 && J_bar_hat > 0 && n_s > 0 && N > 0 && delta > 0 && delta < 2)) {
    throw Error(ErrorKind::Validation, "smoothing_radius_schedule: inputs must be positive (delta < 2)");
  }
  return std::sqrt(d * J_bar_hat / L_hat) * std::pow(n_s * N / std::log(2.0 / delta), -0.25);
}

struct ZoEstimate {
  Matrix grad_hat;
  long d = 0;
  int samples_used = 0;
};

inline long zo_dimension(const HistoryLift& lift) {
  return static_cast<long>(lift.nu * lift.history_dim());
}

/// (d / (n_s r^2)) sum_m J_tau(K + U_m) U_m with U_m uniform on the Frobenius
/// sphere of radius r. Randomness is keyed by (seed, stream, task_index, m, .)
/// where `stream` distinguishes iterations or repetitions; every perturbation
/// uses its own noise realizations.
inline ZoEstimate zo_gradient_onepoint(const LqgTask& task, const HistoryLift& lift, const Matrix& K,
                                       const RolloutConfig& cfg, std::uint64_t stream, std::uint64_t task_index) {
  cfg.validate(lift.p);
  check_controller_dims(lift, K);
  const int burn_in = cfg.effective_burn_in(lift.p);
  const detail::NoiseFactors nf(task);
  ZoEstimate est;
  est.d = zo_dimension(lift);
  est.grad_hat = Matrix::Zero(K.rows(), K.cols());
  for (int m = 0; m < cfg.n_s; ++m) {
    const auto mk = static_cast<std::uint64_t>(m);
    Rng dir_rng(cfg.seed, {stream, task_index, mk, 0});
    Matrix U = dir_rng.normal_matrix(K.rows(), K.cols());
    U *= cfg.r / U.norm();
    const Matrix Kp = K + U;
    double J = 0.0;
    for (int c = 0; c < cfg.n_c; ++c) {
      Rng noise(cfg.seed, {stream, task_index, mk, static_cast<std::uint64_t>(c) + 1});
      double acc = 0.0;
      try {
        detail::run_closed_loop(task, lift, Kp, cfg.tau, nf, noise,
                                [&](int t, const Vector&, const Vector& y, const Vector& u) {
                                  if (t >= burn_in) acc += y.dot(task.Q * y) + u.dot(task.R * u);
                                });
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Diverged) throw;
        throw IndexedError(ErrorKind::PerturbationDestabilizes,
                           "task '" + task.id + "': perturbed rollout diverged; reduce r", m);
      }
      J += acc / static_cast<double>(cfg.tau - burn_in);
    }
    J /= cfg.n_c;
    est.grad_hat += J * U;
  }
  est.grad_hat *= static_cast<double>(est.d) / (cfg.n_s * cfg.r * cfg.r);
  est.samples_used = cfg.n_s;
  return est;
}

}  // namespace mtlqg
