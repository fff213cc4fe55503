#pragma once

// Variance study for the multitask one-point estimator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mtlqg/trainer.hpp"

namespace mtlqg {

struct VarianceStudyConfig {
  std::vector<int> grid{1, 2, 5, 10, 25, 50, 100};
  int repetitions = 20;
  RolloutConfig rollout;
  int threads = 1;
};

struct VarianceRow {
  int N = 0;
  double rmse = 0.0;           // sqrt(mean ||g_hat - g_N||_F^2)
  double relative_rmse = 0.0;  // rmse / reference_norm
  double exact_norm = 0.0;     // ||g_N||_F
  double reference_norm = 0.0;  // ||g_N||_F at the largest N of the grid
  int repetitions = 0;
};

/// For each N in the grid, g_N is the exact gradient averaged over the first
/// N tasks and g_hat the average of their one-point estimates; repetitions use
/// disjoint random streams. All rows share one normalizer, the norm of g_N at
/// the largest N, because near a common optimum the task gradients partly
/// cancel and ||g_N|| alone can change by an order of magnitude between grid
/// points.
inline std::vector<VarianceRow> variance_study(const std::vector<TaskProblem>& problems, const Matrix& K,
                                               const VarianceStudyConfig& cfg) {
  if (cfg.repetitions < 1) throw Error(ErrorKind::Validation, "variance study: repetitions must be positive");
  if (cfg.grid.empty()) throw Error(ErrorKind::Validation, "variance study: empty grid");
  for (int N : cfg.grid) {
    if (N < 1 || N > static_cast<int>(problems.size())) {
      throw Error(ErrorKind::Validation, "variance study: grid value " + std::to_string(N) +
                                             " exceeds the number of tasks (" + std::to_string(problems.size()) + ")");
    }
  }
  const int n_max = *std::max_element(cfg.grid.begin(), cfg.grid.end());
  std::vector<Matrix> exact(static_cast<std::size_t>(n_max));
  parallel_for(exact.size(), cfg.threads,
               [&](std::size_t i) { exact[i] = gradient_exact(problems[i].task, problems[i].lift, K).grad; });
  const auto averaged = [&](int N) {
    Matrix g = Matrix::Zero(K.rows(), K.cols());
    for (int i = 0; i < N; ++i) g += exact[static_cast<std::size_t>(i)];
    return Matrix(g / N);
  };
  const double reference = averaged(n_max).norm();

  std::vector<VarianceRow> rows;
  for (int N : cfg.grid) {
    const Matrix g = averaged(N);

    const std::size_t jobs = static_cast<std::size_t>(cfg.repetitions) * static_cast<std::size_t>(N);
    std::vector<Matrix> est(jobs);
    parallel_for(jobs, cfg.threads, [&](std::size_t k) {
      const std::size_t rep = k / static_cast<std::size_t>(N);
      const std::size_t i = k % static_cast<std::size_t>(N);
      const std::uint64_t stream = substream_key(static_cast<std::uint64_t>(N), {rep});
      est[k] = zo_gradient_onepoint(problems[i].task, problems[i].lift, K, cfg.rollout, stream, i).grad_hat;
    });
    double sq = 0.0;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      Matrix ghat = Matrix::Zero(K.rows(), K.cols());
      for (int i = 0; i < N; ++i) ghat += est[static_cast<std::size_t>(rep) * N + i];
      ghat /= N;
      sq += (ghat - g).squaredNorm();
    }
    VarianceRow row;
    row.N = N;
    row.rmse = std::sqrt(sq / cfg.repetitions);
    row.exact_norm = g.norm();
    row.reference_norm = reference;
    row.relative_rmse = row.rmse / reference;
    row.repetitions = cfg.repetitions;
    rows.push_back(row);
  }
  return rows;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::Validation, "loglog_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace mtlqg
