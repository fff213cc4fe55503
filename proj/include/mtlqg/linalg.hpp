#pragma once

// Dense linear algebra and control primitives: vectorization, Kronecker
// products, spectral radius, right pseudoinverse, discrete Lyapunov and
// Riccati solvers, controllability/observability rank tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtlqg/errors.hpp"

namespace mtlqg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Column-stacking vectorization.
inline Vector vec(const Matrix& X) {
  return Eigen::Map<const Vector>(X.data(), X.size());
}

/// Inverse of vec for a rows x cols matrix.
inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw Error(ErrorKind::Validation, "unvec: size mismatch");
  }
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    }
  }
  return out;
}

inline Matrix symmetrize(const Matrix& X) { return 0.5 * (X + X.transpose()); }

inline bool is_symmetric(const Matrix& X, double rel_tol = 1e-10) {
  if (X.rows() != X.cols()) return false;
  return (X - X.transpose()).norm() <= rel_tol * (1.0 + X.norm());
}

inline double spectral_radius(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw Error(ErrorKind::Validation, "spectral_radius: matrix must be square and non-empty");
  }
  if (A.rows() == 1) return std::abs(A(0, 0));
  Eigen::EigenSolver<Matrix> solver(A, false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::Validation, "spectral_radius: eigenvalue iteration did not converge");
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// True iff rho(A) < 1 - margin.
inline bool is_schur_stable(const Matrix& A, double margin = 0.0) {
  return spectral_radius(A) < 1.0 - margin;
}

/// Smallest eigenvalue of the symmetric part of X.
inline double min_eigenvalue(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(X), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(X), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// Spectral (operator 2-) norm.
inline double spectral_norm(const Matrix& X) {
  if (X.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(X);
  return svd.singularValues()(0);
}

/// Euclidean projection onto the PSD cone.
inline Matrix psd_part(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(X));
  Vector d = es.eigenvalues().cwiseMax(0.0);
  return symmetrize(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

/// Symmetric square root of a PSD matrix (negative round-off clipped).
inline Matrix psd_sqrt(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(X));
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Numerical rank with tolerance relative to the largest singular value.
inline Eigen::Index numeric_rank(const Matrix& M, double rel_tol = 1e-9) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s(0) == 0.0) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

/// Moore-Penrose right inverse of a full-row-rank matrix (S * S^+ = I).
inline Matrix right_pinv(const Matrix& S, double rel_tol = 1e-9) {
  Eigen::JacobiSVD<Matrix> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Eigen::Index n = S.rows();
  if (S.cols() < n || s.size() < n || s(0) == 0.0 || s(n - 1) <= rel_tol * s(0)) {
    throw Error(ErrorKind::RankDeficient, "right_pinv: matrix is not of full row rank");
  }
  return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

/// Solves X = Qc + A X A^T by the squared-Smith (doubling) iteration.
inline Matrix dlyap(const Matrix& A, const Matrix& Qc) {
  if (A.rows() != A.cols() || Qc.rows() != Qc.cols() || A.rows() != Qc.rows()) {
    throw Error(ErrorKind::Validation, "dlyap: dimension mismatch");
  }
  if (!is_symmetric(Qc)) throw Error(ErrorKind::NonSymmetric, "dlyap: forcing term is not symmetric");
  const double rho = spectral_radius(A);
  if (!(rho < 1.0)) {
    throw Error(ErrorKind::Unstable, "dlyap: rho(A) = " + std::to_string(rho) + " >= 1");
  }
  Matrix X = symmetrize(Qc);
  Matrix Ak = A;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int k = 0; k < 100; ++k) {
    Matrix delta = Ak * X * Ak.transpose();
    X = symmetrize(X + delta);
    if (delta.norm() <= eps * X.norm() || delta.norm() == 0.0) break;
    Ak = Ak * Ak;
  }
  return X;
}

inline double dlyap_residual(const Matrix& A, const Matrix& Qc, const Matrix& X) {
  return (Qc + A * X * A.transpose() - X).norm();
}

struct DareSolution {
  Matrix P;
  Matrix gain;  // K = -(R + B'PB)^{-1} B'PA, so that A + B K is Schur stable
  double residual = 0.0;
};

inline double dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q,
                            const Matrix& R, const Matrix& P) {
  const Matrix BtP = B.transpose() * P;
  const Matrix G = (R + BtP * B).ldlt().solve(BtP * A);
  return (Q + A.transpose() * P * A - A.transpose() * P * B * G - P).norm();
}

namespace detail {

inline Matrix riccati_gain(const Matrix& A, const Matrix& B, const Matrix& R, const Matrix& P) {
  const Matrix BtP = B.transpose() * P;
  return -(R + BtP * B).ldlt().solve(BtP * A);
}

// Structure-preserving doubling. Returns false if the iteration breaks down.
inline bool dare_sda(const Matrix& A, const Matrix& B, const Matrix& Q,
                     const Matrix& R, Matrix& P) {
  const Eigen::Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  Matrix Ak = A;
  Matrix Gk = symmetrize(B * R.llt().solve(B.transpose()));
  Matrix Hk = symmetrize(Q);
  for (int k = 0; k < 200; ++k) {
    Eigen::PartialPivLU<Matrix> W(I + Gk * Hk);
    const Matrix WA = W.solve(Ak);
    const Matrix WG = W.solve(Gk);
    Matrix A1 = Ak * WA;
    Matrix G1 = symmetrize(Gk + Ak * WG * Ak.transpose());
    Matrix H1 = symmetrize(Hk + Ak.transpose() * Hk * WA);
    if (!H1.allFinite() || !G1.allFinite() || !A1.allFinite()) return false;
    const double change = (H1 - Hk).norm();
    Ak = std::move(A1);
    Gk = std::move(G1);
    Hk = std::move(H1);
    if (change <= 1e-15 * (1.0 + Hk.norm())) break;
  }
  P = Hk;
  return P.allFinite();
}

// Riccati value iteration from P = Q. Slow, but converges to the stabilizing
// solution under stabilizability/detectability.
inline bool dare_fixed_point(const Matrix& A, const Matrix& B, const Matrix& Q,
                             const Matrix& R, Matrix& P, int max_iter = 200000) {
  P = symmetrize(Q);
  for (int k = 0; k < max_iter; ++k) {
    const Matrix K = riccati_gain(A, B, R, P);
    const Matrix Ac = A + B * K;
    Matrix next = symmetrize(Q + K.transpose() * R * K + Ac.transpose() * P * Ac);
    if (!next.allFinite()) return false;
    const double change = (next - P).norm();
    P = std::move(next);
    if (change <= 1e-14 * (1.0 + P.norm())) return true;
  }
  return true;
}

// Hewer (Newton-Kleinman) refinement from a stabilizing gain.
inline void dare_newton_polish(const Matrix& A, const Matrix& B, const Matrix& Q,
                               const Matrix& R, Matrix& P, int steps) {
  for (int k = 0; k < steps; ++k) {
    const Matrix K = riccati_gain(A, B, R, P);
    const Matrix Ac = A + B * K;
    if (!(spectral_radius(Ac) < 1.0)) return;
    P = dlyap(Ac.transpose(), symmetrize(Q + K.transpose() * R * K));
  }
}

}  // namespace detail

/// Stabilizing solution of P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA.
inline DareSolution dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw Error(ErrorKind::Validation, "dare: dimension mismatch");
  }
  if (!is_symmetric(R) || R.llt().info() != Eigen::Success || min_eigenvalue(R) <= 0.0) {
    throw Error(ErrorKind::RIndefinite, "dare: R must be symmetric positive definite");
  }
  if (!is_symmetric(Q) || min_eigenvalue(Q) < -1e-12 * (1.0 + Q.norm())) {
    throw Error(ErrorKind::Validation, "dare: Q must be symmetric positive semidefinite");
  }

  auto accept = [&](Matrix& P) -> bool {
    if (!P.allFinite()) return false;
    P = symmetrize(P);
    const Matrix K = detail::riccati_gain(A, B, R, P);
    if (!(spectral_radius(A + B * K) < 1.0)) return false;
    if (dare_residual(A, B, Q, R, P) > 1e-10 * (1.0 + P.norm())) {
      detail::dare_newton_polish(A, B, Q, R, P, 3);
    }
    return dare_residual(A, B, Q, R, P) <= 1e-8 * (1.0 + P.norm());
  };

  Matrix P;
  bool ok = detail::dare_sda(A, B, Q, R, P) && accept(P);
  if (!ok) ok = detail::dare_fixed_point(A, B, Q, R, P) && accept(P);
  if (!ok) {
    throw Error(ErrorKind::NotStabilizable,
                "dare: no stabilizing solution found (is (A,B) stabilizable?)");
  }
  DareSolution sol;
  sol.P = P;
  sol.gain = detail::riccati_gain(A, B, R, P);
  sol.residual = dare_residual(A, B, Q, R, P);
  return sol;
}

struct RankTest {
  bool controllable = false;
  bool observable = false;
};

inline Matrix controllability_matrix(const Matrix& A, const Matrix& B) {
  const Eigen::Index n = A.rows();
  Matrix out(n, n * B.cols());
  Matrix block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.middleCols(k * B.cols(), B.cols()) = block;
    block = A * block;
  }
  return out;
}

inline RankTest check_ctrb_obsv(const Matrix& A, const Matrix& B, const Matrix& C) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || C.cols() != n) {
    throw Error(ErrorKind::Validation, "check_ctrb_obsv: dimension mismatch");
  }
  RankTest out;
  out.controllable = numeric_rank(controllability_matrix(A, B)) == n;
  out.observable =
      numeric_rank(controllability_matrix(A.transpose(), C.transpose())) == n;
  return out;
}

}  // namespace mtlqg
