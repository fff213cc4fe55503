#pragma once

// Steady-state Kalman filter quantities shared by the lifting and the cost.

#include "mtlqg/task.hpp"

namespace mtlqg {

struct InnovationStatistics {
  Matrix Sigma_tilde;  // one-step prediction error covariance
  Matrix L;            // filter gain
  Matrix S;            // innovation covariance C Sigma_tilde C' + V
  Matrix Sigma_nu;     // covariance driving the estimate recursion, L S L'
  Matrix Sigma_e;      // filtering error covariance (I - LC) Sigma_tilde
};

inline InnovationStatistics innovation_statistics(const LqgTask& task) {
  InnovationStatistics st;
  // Filter Riccati: process noise W enters additively, V inside the inverse.
  st.Sigma_tilde = dare(task.A.transpose(), task.C.transpose(), task.W, task.V).P;
  st.S = symmetrize(task.C * st.Sigma_tilde * task.C.transpose() + task.V);
  Eigen::LLT<Matrix> llt(st.S);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularInnovation, "task '" + task.id + "': innovation covariance is singular");
  }
  st.L = llt.solve(task.C * st.Sigma_tilde).transpose();
  st.Sigma_nu = symmetrize(st.L * st.S * st.L.transpose());
  const Matrix I = Matrix::Identity(task.nx(), task.nx());
  st.Sigma_e = symmetrize((I - st.L * task.C) * st.Sigma_tilde);
  return st;
}

}  // namespace mtlqg
