#pragma once

// Gradient dynamical systems, exact gradient heterogeneity and the
// bisimulation certificate b_ij >= ||grad J_i - grad J_j||_F^2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mtlqg/lqg_cost.hpp"
#include "mtlqg/parallel.hpp"

namespace mtlqg {

/// s+ = F s + nu, z = C_out s, with s = vec of the estimate covariance
/// recursion. C_out s_inf = vec(grad J).
struct GradientSystem {
  Matrix F;      // A_K kron A_K
  Matrix C_out;  // S^+ kron E_K, so vec(E X S^+') = C_out vec(X)
  Vector nu;     // vec(Sigma_nu)
  Eigen::Index n_x = 0;
};

inline GradientSystem gradient_system_assemble(const LqgTask& task, const HistoryLift& lift, const Matrix& K) {
  const GradientReport g = gradient_exact(task, lift, K);
  const Matrix AK = closed_loop_matrix(task, lift, K);
  GradientSystem sys;
  sys.n_x = task.nx();
  sys.F = kron(AK, AK);
  sys.C_out = kron(lift.S_dagger, g.E_K);
  sys.nu = vec(lift.filter.Sigma_nu);
#ifndef NDEBUG
  {
    const Eigen::Index n = sys.F.rows();
    const Vector s_inf = (Matrix::Identity(n, n) - sys.F).partialPivLu().solve(sys.nu);
    const double err = (sys.C_out * s_inf - vec(g.grad)).norm();
    if (err > 1e-6 * (1.0 + g.grad.norm())) {
      throw std::logic_error("gradient_system_assemble: output map does not reproduce the gradient");
    }
  }
#endif
  return sys;
}

inline double epsilon_het_exact(const LqgTask& task_i, const HistoryLift& lift_i, const LqgTask& task_j,
                                const HistoryLift& lift_j, const Matrix& K) {
  const Matrix gi = gradient_exact(task_i, lift_i, K).grad;
  const Matrix gj = gradient_exact(task_j, lift_j, K).grad;
  return (gi - gj).squaredNorm();
}

/// Cesaro mean (1/T) sum_{t<T} ||C_i s_i(t) - C_j s_j(t)||^2 from s(0) = 0.
inline double epsilon_het_trajectory_oracle(const GradientSystem& si, const GradientSystem& sj, long T) {
  if (T < 1) throw Error(ErrorKind::Validation, "trajectory oracle: T must be positive");
  if (si.C_out.rows() != sj.C_out.rows()) {
    throw Error(ErrorKind::Validation, "trajectory oracle: output dimensions differ");
  }
  Vector a = Vector::Zero(si.F.rows());
  Vector b = Vector::Zero(sj.F.rows());
  double acc = 0.0;
  for (long t = 0; t < T; ++t) {
    acc += (si.C_out * a - sj.C_out * b).squaredNorm();
    a = si.F * a + si.nu;
    b = sj.F * b + sj.nu;
  }
  return acc / static_cast<double>(T);
}

struct JointSystem {
  Matrix F;
  Matrix C;
  Vector nu;
};

inline JointSystem joint_system(const GradientSystem& si, const GradientSystem& sj) {
  if (si.C_out.rows() != sj.C_out.rows()) {
    throw Error(ErrorKind::Validation, "joint system: output dimensions differ");
  }
  const Eigen::Index ni = si.F.rows();
  const Eigen::Index nj = sj.F.rows();
  JointSystem js;
  js.F = Matrix::Zero(ni + nj, ni + nj);
  js.F.topLeftCorner(ni, ni) = si.F;
  js.F.bottomRightCorner(nj, nj) = sj.F;
  js.C.resize(si.C_out.rows(), ni + nj);
  js.C << si.C_out, -sj.C_out;
  js.nu.resize(ni + nj);
  js.nu << si.nu, sj.nu;
  return js;
}

struct LambdaEta {
  double lambda = 0.0;
  double eta = 0.0;
  double zeta = 0.0;
  double lambda_prime = 0.0;
  double rho_joint = 0.0;
  double epsilon_margin = 0.0;
};

inline LambdaEta lambda_eta_from_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw Error(ErrorKind::MarginTooLarge, "lambda = " + std::to_string(lambda) + " is outside (0, 1)");
  }
  LambdaEta le;
  le.lambda = lambda;
  const double s = std::sqrt(1.0 - lambda);
  le.eta = 1.0 / s - 1.0;
  le.zeta = 1.0 + 1.0 / le.eta;
  le.lambda_prime = 1.0 - s;
  return le;
}

/// lambda = 1 - rho(F_joint)^2 - epsilon_margin.
inline LambdaEta select_lambda_eta(const GradientSystem& si, const GradientSystem& sj, double epsilon_margin) {
  const double rho = std::max(spectral_radius(si.F), spectral_radius(sj.F));
  if (!(rho < 1.0)) throw Error(ErrorKind::NotStabilizing, "gradient system is not stable");
  if (!(epsilon_margin > 0.0)) throw Error(ErrorKind::Validation, "epsilon_margin must be positive");
  const double lambda = 1.0 - rho * rho - epsilon_margin;
  if (!(lambda > 0.0)) {
    throw Error(ErrorKind::MarginTooLarge, "epsilon_margin " + std::to_string(epsilon_margin) +
                                               " >= 1 - rho^2 = " + std::to_string(1.0 - rho * rho));
  }
  LambdaEta le = lambda_eta_from_lambda(lambda);
  le.rho_joint = rho;
  le.epsilon_margin = epsilon_margin;
  return le;
}

/// M = sum_k (1-lambda)^{-k} F'^k C'C F^k.
inline Matrix solve_M_lyapunov(const JointSystem& js, double lambda) {
  const Matrix Fs = js.F.transpose() / std::sqrt(1.0 - lambda);
  return dlyap(Fs, symmetrize(js.C.transpose() * js.C));
}

inline Matrix solve_M_lyapunov(const GradientSystem& si, const GradientSystem& sj, double lambda) {
  return solve_M_lyapunov(joint_system(si, sj), lambda);
}

struct LmiResiduals {
  double output_bound = 0.0;  // min eig(M - C'C)
  double decay = 0.0;         // min eig((1-lambda) M - F'MF)
  double scale = 0.0;         // ||M||
  bool feasible(double rel_tol = 1e-8) const {
    const double tol = rel_tol * std::max(scale, std::numeric_limits<double>::min());
    return output_bound >= -tol && decay >= -tol;
  }
};

inline LmiResiduals lmi_residuals(const JointSystem& js, double lambda, const Matrix& M) {
  LmiResiduals r;
  r.scale = spectral_norm(M);
  r.output_bound = min_eigenvalue(symmetrize(M - js.C.transpose() * js.C));
  r.decay = min_eigenvalue(symmetrize((1.0 - lambda) * M - js.F.transpose() * M * js.F));
  return r;
}

namespace detail {

inline Matrix lmi_decay_op(const Matrix& F, double lambda, const Matrix& M) {
  return (1.0 - lambda) * M - F.transpose() * M * F;
}

/// Smallest feasible correction of X: first lift it above C'C, then add the
/// Lyapunov solution that cancels the negative part of the decay residual.
inline Matrix repair_feasible(const JointSystem& js, double lambda, const Matrix& C0, const Matrix& X) {
  Matrix X1 = symmetrize(X + psd_part(C0 - X));
  const Matrix P = psd_part(-lmi_decay_op(js.F, lambda, X1));
  if (P.norm() == 0.0) return X1;
  const Matrix Fs = js.F.transpose() / std::sqrt(1.0 - lambda);
  return symmetrize(X1 + dlyap(Fs, symmetrize(P / (1.0 - lambda))));
}

}  // namespace detail

/// Lowers nu' M nu over the LMI set by ADMM on the splitting
/// Z1 = M - C'C >= 0, Z2 = (1-lambda)M - F'MF >= 0. Every candidate is made
/// feasible by detail::repair_feasible and re-verified by eigenvalue checks;
/// the result is never worse than M0.
inline Matrix refine_M_sdp(const JointSystem& js, double lambda, const Matrix& M0, int budget) {
  const auto objective = [&](const Matrix& M) { return js.nu.dot(M * js.nu); };
  const double f0 = objective(M0);
  if (budget <= 0 || !(f0 > 0.0)) return M0;

  const Eigen::Index n = js.F.rows();
  const Eigen::Index n2 = n * n;
  const Matrix C0 = symmetrize(js.C.transpose() * js.C);
  const Matrix N = js.nu * js.nu.transpose();

  // vec(L(M)) = Lmat vec(M); M-update solves (I + Lmat' Lmat) m = rhs.
  const Matrix Lmat = (1.0 - lambda) * Matrix::Identity(n2, n2) - kron(js.F.transpose(), js.F.transpose());
  const Eigen::LLT<Matrix> G((Matrix::Identity(n2, n2) + Lmat.transpose() * Lmat).eval());
  if (G.info() != Eigen::Success) return M0;

  auto Lop = [&](const Matrix& M) { return detail::lmi_decay_op(js.F, lambda, M); };
  auto Ladj = [&](const Matrix& Y) { return (1.0 - lambda) * Y - js.F * Y * js.F.transpose(); };

  Matrix M = M0;
  Matrix Z1 = psd_part(M - C0), Z2 = psd_part(Lop(M));
  Matrix U1 = Matrix::Zero(n, n), U2 = Matrix::Zero(n, n);
  double rho = std::max(N.norm() / std::max(M0.norm(), 1e-300), 1e-12);

  Matrix best = M0;
  double best_f = f0;
  double last_check_f = f0;
  const auto try_candidate = [&](const Matrix& X) {
    Matrix cand = detail::repair_feasible(js, lambda, C0, X);
    const double f = objective(cand);
    if (f < best_f && lmi_residuals(js, lambda, cand).feasible()) {
      best = std::move(cand);
      best_f = f;
    }
  };

  for (int it = 1; it <= budget; ++it) {
    const Matrix rhs = C0 + Z1 - U1 + Ladj(Z2 - U2) - N / rho;
    M = symmetrize(unvec(G.solve(vec(rhs)), n, n));
    const Matrix LM = Lop(M);
    const Matrix Z1_old = Z1, Z2_old = Z2;
    Z1 = psd_part(M - C0 + U1);
    Z2 = psd_part(LM + U2);
    const Matrix r1 = M - C0 - Z1;
    const Matrix r2 = LM - Z2;
    U1 += r1;
    U2 += r2;

    const double primal = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
    const double dual = rho * std::sqrt((Z1 - Z1_old).squaredNorm() + Ladj(Z2 - Z2_old).squaredNorm());
    if (primal > 10.0 * dual) {
      rho *= 2.0;
      U1 /= 2.0;
      U2 /= 2.0;
    } else if (dual > 10.0 * primal) {
      rho /= 2.0;
      U1 *= 2.0;
      U2 *= 2.0;
    }

    if (it % 25 == 0 || it == budget) {
      try_candidate(M);
      if (it % 25 == 0) {
        const double improvement = (last_check_f - best_f) / last_check_f;
        last_check_f = best_f;
        if (it >= 100 && improvement < 1e-8 && primal <= 1e-6 * (1.0 + M.norm())) break;
      }
    }
  }
  return best;
}

enum class MBackend { LyapunovFeasible, SdpRefined };

inline std::string to_string(MBackend b) {
  return b == MBackend::LyapunovFeasible ? "lyapunov-feasible" : "sdp-refined";
}

struct HeterogeneityConfig {
  double relative_margin = 0.05;  // epsilon_margin = relative_margin * (1 - rho(F_joint)^2)
  bool refine = false;
  int refine_budget = 2000;
  bool keep_matrices = true;
};

struct BisimCertificate {
  Matrix M;
  double lambda = 0.0;
  double eta = 0.0;
  double zeta = 0.0;
  double lambda_prime = 0.0;
  double rho_joint = 0.0;
  double epsilon_margin = 0.0;
  double b_ij = 0.0;
  double b_lyapunov = 0.0;  // bound from the Lyapunov feasible point
  MBackend backend = MBackend::LyapunovFeasible;
  LmiResiduals residuals;
};

inline BisimCertificate certify_pair(const GradientSystem& si, const GradientSystem& sj,
                                     const HeterogeneityConfig& cfg) {
  if (!(cfg.relative_margin > 0.0 && cfg.relative_margin < 1.0)) {
    throw Error(ErrorKind::Validation, "relative_margin must lie in (0, 1)");
  }
  const double rho = std::max(spectral_radius(si.F), spectral_radius(sj.F));
  if (!(rho < 1.0)) throw Error(ErrorKind::NotStabilizing, "gradient system is not stable");
  const LambdaEta le = select_lambda_eta(si, sj, cfg.relative_margin * (1.0 - rho * rho));
  const JointSystem js = joint_system(si, sj);

  BisimCertificate cert;
  cert.lambda = le.lambda;
  cert.eta = le.eta;
  cert.zeta = le.zeta;
  cert.lambda_prime = le.lambda_prime;
  cert.rho_joint = le.rho_joint;
  cert.epsilon_margin = le.epsilon_margin;

  const auto bound = [&](const Matrix& M) {
    return std::max(0.0, le.zeta * js.nu.dot(M * js.nu) / le.lambda_prime);
  };
  cert.M = solve_M_lyapunov(js, le.lambda);
  cert.b_lyapunov = bound(cert.M);
  cert.b_ij = cert.b_lyapunov;
  if (cfg.refine) {
    Matrix Mr = refine_M_sdp(js, le.lambda, cert.M, cfg.refine_budget);
    const double br = bound(Mr);
    if (br < cert.b_ij) {
      cert.M = std::move(Mr);
      cert.b_ij = br;
      cert.backend = MBackend::SdpRefined;
    }
  }
  cert.residuals = lmi_residuals(js, le.lambda, cert.M);
  if (!cfg.keep_matrices) cert.M.resize(0, 0);
  return cert;
}

inline BisimCertificate bisim_heterogeneity(const LqgTask& task_i, const HistoryLift& lift_i,
                                            const LqgTask& task_j, const HistoryLift& lift_j,
                                            const Matrix& K, const HeterogeneityConfig& cfg = {}) {
  return certify_pair(gradient_system_assemble(task_i, lift_i, K),
                      gradient_system_assemble(task_j, lift_j, K), cfg);
}

struct HeterogeneityReport {
  Matrix b;         // symmetric, zero diagonal
  Matrix eps_het;   // exact pairwise heterogeneity
  Vector b_avg;     // b_i = (1/(N-1)) sum_{j != i} b_ij
  std::vector<BisimCertificate> certificates;  // pairs (i<j) in lexicographic order
};

inline HeterogeneityReport average_heterogeneity(const std::vector<TaskProblem>& problems, const Matrix& K,
                                                 const HeterogeneityConfig& cfg = {}, int threads = 1) {
  const std::size_t N = problems.size();
  std::vector<GradientSystem> systems(N);
  std::vector<Matrix> grads(N);
  parallel_for(N, threads, [&](std::size_t i) {
    try {
      systems[i] = gradient_system_assemble(problems[i].task, problems[i].lift, K);
      grads[i] = gradient_exact(problems[i].task, problems[i].lift, K).grad;
    } catch (const Error& e) {
      throw IndexedError(e.kind(), e.message(), static_cast<long>(i));
    }
  });
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) pairs.emplace_back(i, j);

  HeterogeneityReport rep;
  rep.certificates.resize(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    rep.certificates[k] = certify_pair(systems[pairs[k].first], systems[pairs[k].second], cfg);
  });
  rep.b = Matrix::Zero(N, N);
  rep.eps_het = Matrix::Zero(N, N);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    rep.b(i, j) = rep.b(j, i) = rep.certificates[k].b_ij;
    rep.eps_het(i, j) = rep.eps_het(j, i) = (grads[i] - grads[j]).squaredNorm();
  }
  rep.b_avg = Vector::Zero(N);
  if (N > 1) {
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j) s += rep.b(i, j);
      rep.b_avg(i) = s / static_cast<double>(N - 1);
    }
  }
  return rep;
}

}  // namespace mtlqg
