#pragma once

// Input-output history lifting: x_hat_t = S z_t with
// z_t = [u_{t-1}; ...; u_{t-p}; y_t; ...; y_{t-p+1}].

#include <cmath>
#include <string>
#include <vector>

#include "mtlqg/innovation.hpp"

namespace mtlqg {

inline constexpr double kTruncationWarnThreshold = 1e-4;

struct HistoryLift {
  std::string task_id;
  int p = 0;
  Eigen::Index nu = 0;
  Eigen::Index ny = 0;
  Matrix S_star;     // n_x x p(n_u + n_y)
  Matrix S_dagger;   // right inverse, S_star * S_dagger = I
  Matrix predictor;  // (I - LC) A
  double predictor_radius = 0.0;
  double truncation_bound = 0.0;  // rho(predictor)^p
  InnovationStatistics filter;

  Eigen::Index history_dim() const { return S_star.cols(); }
  bool truncation_warning() const { return truncation_bound > kTruncationWarnThreshold; }
};

struct LiftedController {
  Matrix K;  // n_u x p(n_u + n_y)
  int p = 0;
};

/// Unrolls the steady-state filter x_hat_t = A_bar x_hat_{t-1} + (I-LC)B u_{t-1} + L y_t
/// for p steps and drops the initial-condition term.
inline HistoryLift build_s_star(const LqgTask& task, int p) {
  if (p < 1 || p < task.nx()) {
    throw Error(ErrorKind::Validation, "build_s_star: history length p = " + std::to_string(p) +
                                           " must be at least n_x = " + std::to_string(task.nx()));
  }
  HistoryLift lift;
  lift.task_id = task.id;
  lift.p = p;
  lift.nu = task.nu();
  lift.ny = task.ny();
  lift.filter = innovation_statistics(task);

  const Eigen::Index n = task.nx();
  const Matrix I_LC = Matrix::Identity(n, n) - lift.filter.L * task.C;
  lift.predictor = I_LC * task.A;
  lift.predictor_radius = spectral_radius(lift.predictor);
  if (!(lift.predictor_radius < 1.0)) {
    throw Error(ErrorKind::FilterUnstable, "task '" + task.id + "': rho((I-LC)A) = " +
                                               std::to_string(lift.predictor_radius));
  }
  lift.truncation_bound = std::pow(lift.predictor_radius, p);

  const Eigen::Index m = lift.nu;
  const Eigen::Index k = lift.ny;
  lift.S_star.resize(n, p * (m + k));
  Matrix ublock = I_LC * task.B;
  Matrix yblock = lift.filter.L;
  for (int j = 0; j < p; ++j) {
    lift.S_star.middleCols(j * m, m) = ublock;
    lift.S_star.middleCols(p * m + j * k, k) = yblock;
    ublock = lift.predictor * ublock;
    yblock = lift.predictor * yblock;
  }
  lift.S_dagger = right_pinv(lift.S_star);
  return lift;
}

/// K_tilde = K S with K the LQR gain of (A, B, C'QC, R).
inline LiftedController lifted_optimal_controller(const LqgTask& task, const HistoryLift& lift) {
  const Matrix Qt = task.C.transpose() * task.Q * task.C;
  const DareSolution sol = dare(task.A, task.B, symmetrize(Qt), task.R);
  return {sol.gain * lift.S_star, lift.p};
}

inline void check_controller_dims(const HistoryLift& lift, const Matrix& K) {
  if (K.rows() != lift.nu || K.cols() != lift.history_dim()) {
    throw Error(ErrorKind::Validation, "controller has dimensions " + std::to_string(K.rows()) + "x" +
                                           std::to_string(K.cols()) + ", lift expects " +
                                           std::to_string(lift.nu) + "x" +
                                           std::to_string(lift.history_dim()));
  }
}

inline Matrix closed_loop_matrix(const LqgTask& task, const HistoryLift& lift, const Matrix& K) {
  check_controller_dims(lift, K);
  return task.A + task.B * (K * lift.S_dagger);
}

/// Buffers are newest first: u_buffer[0] = u_{t-1}, y_buffer[0] = y_t.
/// Missing entries are zero.
inline Vector history_assemble(const std::vector<Vector>& u_buffer, const std::vector<Vector>& y_buffer,
                               int p, Eigen::Index nu, Eigen::Index ny) {
  Vector z = Vector::Zero(p * (nu + ny));
  for (int j = 0; j < p && j < static_cast<int>(u_buffer.size()); ++j) {
    if (u_buffer[j].size() != nu) throw Error(ErrorKind::Validation, "history_assemble: input size mismatch");
    z.segment(j * nu, nu) = u_buffer[j];
  }
  for (int j = 0; j < p && j < static_cast<int>(y_buffer.size()); ++j) {
    if (y_buffer[j].size() != ny) throw Error(ErrorKind::Validation, "history_assemble: output size mismatch");
    z.segment(p * nu + j * ny, ny) = y_buffer[j];
  }
  return z;
}

/// Rolling history vector for simulation; push the new output before
/// reading z(), then push the input computed from it.
class HistoryBuffer {
 public:
  HistoryBuffer(int p, Eigen::Index nu, Eigen::Index ny)
      : p_(p), nu_(nu), ny_(ny), z_(Vector::Zero(p * (nu + ny))) {}

  void push_output(const Vector& y) {
    auto ys = z_.tail(p_ * ny_);
    for (Eigen::Index i = ys.size() - 1; i >= ny_; --i) ys(i) = ys(i - ny_);
    ys.head(ny_) = y;
  }

  void push_input(const Vector& u) {
    auto us = z_.head(p_ * nu_);
    for (Eigen::Index i = us.size() - 1; i >= nu_; --i) us(i) = us(i - nu_);
    us.head(nu_) = u;
  }

  const Vector& z() const { return z_; }

 private:
  int p_;
  Eigen::Index nu_, ny_;
  Vector z_;
};

}  // namespace mtlqg
