#pragma once

// Multitask policy gradient K+ = K - (alpha/N) sum_i grad J_i(K), in exact
// (model-based) or zeroth-order (rollout) mode, with a per-step stability
// guard, logging and generalization/bound audits.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mtlqg/heterogeneity.hpp"
#include "mtlqg/parallel.hpp"
#include "mtlqg/rollout.hpp"

namespace mtlqg {

enum class GradientMode { Exact, ZerothOrder };

inline std::string to_string(GradientMode m) { return m == GradientMode::Exact ? "exact" : "zo"; }

inline GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "exact") return GradientMode::Exact;
  if (s == "zo" || s == "zeroth_order") return GradientMode::ZerothOrder;
  throw Error(ErrorKind::Validation, "unknown gradient mode '" + s + "' (expected exact or zo)");
}

struct TrainConfig {
  double alpha = 1e-7;
  bool auto_alpha = false;  // alpha = 0.9 min(1/(4 L), 4/gamma) from local estimates at the initial controller
  int iterations = 10000;
  GradientMode mode = GradientMode::Exact;
  RolloutConfig rollout;
  int heterogeneity_every = 0;  // 0 disables b_i logging
  HeterogeneityConfig heterogeneity;
  std::uint64_t seed = 0;
  double stability_margin = 0.0;
  int log_every = 1;
  int threads = 1;

  void validate() const {
    if (!(alpha > 0.0) && !auto_alpha) throw Error(ErrorKind::Validation, "alpha must be positive");
    if (iterations < 1) throw Error(ErrorKind::Validation, "iterations must be at least 1");
    if (log_every < 1) throw Error(ErrorKind::Validation, "log_every must be at least 1");
    if (heterogeneity_every < 0) throw Error(ErrorKind::Validation, "heterogeneity_every must be non-negative");
    if (!(stability_margin >= 0.0 && stability_margin < 1.0)) {
      throw Error(ErrorKind::Validation, "stability_margin must lie in [0, 1)");
    }
  }
};

struct TrainLogRow {
  long iteration = 0;
  std::size_t task = 0;
  std::string task_id;
  double cost = 0.0;
  double gap = 0.0;
  double grad_norm = 0.0;  // norm of the averaged gradient at this iterate
  double rho_max = 0.0;    // max over training tasks of rho(A_K)
  double b_i = std::numeric_limits<double>::quiet_NaN();
};

struct EvalRow {
  long iteration = 0;
  std::string split;  // train | test
  double mean_gap = 0.0;
  double std_gap = 0.0;
  double mean_cost = 0.0;
  int n_stable = 0;
  int n_total = 0;
};

struct TrainResult {
  Matrix K;
  std::vector<TrainLogRow> log;
  std::vector<EvalRow> eval;
  double alpha = 0.0;
  long iterations_completed = 0;
  bool early_stopped = false;
  std::string stop_reason;
};

struct InitialController {
  LiftedController K;
  std::vector<double> rho;  // per training task
};

/// Optimal lifted controller of the nominal task, checked against every
/// training task.
inline InitialController initial_controller(const std::vector<TaskProblem>& problems, const LqgTask& nominal,
                                            int p) {
  if (problems.empty()) throw Error(ErrorKind::Validation, "initial_controller: no tasks");
  const HistoryLift lift = build_s_star(nominal, p);
  InitialController out;
  out.K = lifted_optimal_controller(nominal, lift);
  std::string bad;
  long first_bad = -1;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const double rho = closed_loop_radius(problems[i].task, problems[i].lift, out.K.K);
    out.rho.push_back(rho);
    if (!(rho < 1.0)) {
      if (first_bad < 0) first_bad = static_cast<long>(i);
      bad += (bad.empty() ? "" : ", ") + problems[i].task.id + " (rho = " + std::to_string(rho) + ")";
    }
  }
  if (first_bad >= 0) {
    throw IndexedError(ErrorKind::NoCommonStabilizer, "nominal controller does not stabilize: " + bad, first_bad);
  }
  return out;
}

/// Elementwise mean of the task matrices; used as the nominal task when the
/// generating distribution is unknown.
inline LqgTask mean_task(const std::vector<TaskProblem>& problems) {
  if (problems.empty()) throw Error(ErrorKind::Validation, "mean_task: no tasks");
  LqgTask m = problems.front().task;
  for (std::size_t i = 1; i < problems.size(); ++i) {
    const LqgTask& t = problems[i].task;
    m.A += t.A; m.B += t.B; m.C += t.C; m.W += t.W; m.V += t.V; m.Q += t.Q; m.R += t.R;
  }
  const double s = 1.0 / static_cast<double>(problems.size());
  m.A *= s; m.B *= s; m.C *= s; m.W *= s; m.V *= s; m.Q *= s; m.R *= s;
  m.id = "mean";
  m.params.clear();
  return m;
}

inline std::vector<TaskProblem> make_problems(const std::vector<LqgTask>& tasks, int p, int threads = 1) {
  std::vector<TaskProblem> out(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    try {
      out[i] = make_problem(tasks[i], p);
    } catch (const Error& e) {
      throw IndexedError(e.kind(), e.message(), static_cast<long>(i));
    }
  });
  return out;
}

/// Averaged gradient over the tasks, reduced in index order.
inline Matrix averaged_gradient(const std::vector<TaskProblem>& problems, const Matrix& K, const TrainConfig& cfg,
                                std::uint64_t stream, std::vector<GradientReport>* exact_reports = nullptr) {
  const std::size_t N = problems.size();
  std::vector<Matrix> grads(N);
  if (cfg.mode == GradientMode::Exact) {
    std::vector<GradientReport> reps(N);
    parallel_for(N, cfg.threads, [&](std::size_t i) {
      try {
        reps[i] = gradient_exact(problems[i].task, problems[i].lift, K);
      } catch (const Error& e) {
        throw IndexedError(e.kind(), e.message(), static_cast<long>(i));
      }
    });
    for (std::size_t i = 0; i < N; ++i) grads[i] = reps[i].grad;
    if (exact_reports) *exact_reports = std::move(reps);
  } else {
    parallel_for(N, cfg.threads, [&](std::size_t i) {
      grads[i] = zo_gradient_onepoint(problems[i].task, problems[i].lift, K, cfg.rollout, stream, i).grad_hat;
    });
  }
  Matrix avg = Matrix::Zero(K.rows(), K.cols());
  for (const Matrix& g : grads) avg += g;
  return avg / static_cast<double>(N);
}

inline void stability_guard(const std::vector<TaskProblem>& problems, const Matrix& K, double margin) {
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const double rho = closed_loop_radius(problems[i].task, problems[i].lift, K);
    if (!(rho < 1.0 - margin)) {
      throw IndexedError(ErrorKind::StepDestabilized,
                         "step leaves task '" + problems[i].task.id + "' with rho = " + std::to_string(rho) +
                             "; try halving alpha",
                         static_cast<long>(i));
    }
  }
}

inline Matrix pg_step(const std::vector<TaskProblem>& problems, const Matrix& K, const TrainConfig& cfg,
                      double alpha, std::uint64_t stream = 0) {
  const Matrix next = K - alpha * averaged_gradient(problems, K, cfg, stream);
  stability_guard(problems, next, cfg.stability_margin);
  return next;
}

/// 0.9 min(1/(4 L_hat), 4/gamma_hat); L_hat is the largest local curvature
/// estimate over the tasks and gamma_hat the smallest dominance constant.
inline double auto_step_size(const std::vector<TaskProblem>& problems, const Matrix& K, std::uint64_t seed) {
  double L = 0.0;
  double gamma = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < problems.size(); ++i) {
    Rng rng(seed, {0x5300, static_cast<std::uint64_t>(i)});
    L = std::max(L, estimate_smoothness(problems[i].task, problems[i].lift, K, rng));
    gamma = std::min(gamma, problems[i].gamma);
  }
  if (!(L > 0.0)) throw Error(ErrorKind::Validation, "auto step size: curvature estimate is zero");
  const double from_gamma = gamma > 0.0 ? 4.0 / gamma : std::numeric_limits<double>::infinity();
  return 0.9 * std::min(1.0 / (4.0 * L), from_gamma);
}

namespace detail {

inline EvalRow eval_row(const std::vector<TaskProblem>& problems, const Matrix& K, long iteration,
                        const std::string& split) {
  EvalRow row;
  row.iteration = iteration;
  row.split = split;
  row.n_total = static_cast<int>(problems.size());
  std::vector<double> gaps, costs;
  for (const TaskProblem& pr : problems) {
    if (!(closed_loop_radius(pr.task, pr.lift, K) < 1.0)) continue;
    const double J = cost_exact(pr.task, pr.lift, K).J;
    costs.push_back(J);
    gaps.push_back(J - pr.J_star);
  }
  row.n_stable = static_cast<int>(gaps.size());
  if (!gaps.empty()) {
    double sg = 0.0, sc = 0.0;
    for (std::size_t k = 0; k < gaps.size(); ++k) {
      sg += gaps[k];
      sc += costs[k];
    }
    row.mean_gap = sg / gaps.size();
    row.mean_cost = sc / costs.size();
    double var = 0.0;
    for (double g : gaps) var += (g - row.mean_gap) * (g - row.mean_gap);
    row.std_gap = std::sqrt(var / gaps.size());
  }
  return row;
}

}  // namespace detail

/// Runs cfg.iterations steps from K0. Iterates 0, log_every, 2 log_every, ...
/// and the final iterate are logged. When `test` is given, train/test gap
/// statistics are recorded at the same iterations.
inline TrainResult train_multitask(const std::vector<TaskProblem>& problems, const Matrix& K0,
                                   const TrainConfig& cfg, const std::vector<TaskProblem>* test = nullptr) {
  cfg.validate();
  if (problems.empty()) throw Error(ErrorKind::Validation, "train_multitask: no tasks");
  stability_guard(problems, K0, 0.0);
  TrainResult res;
  res.K = K0;
  res.alpha = cfg.auto_alpha ? auto_step_size(problems, K0, cfg.seed) : cfg.alpha;
  const std::size_t N = problems.size();

  for (long n = 0;; ++n) {
    const bool last = n == cfg.iterations;
    const bool log_now = last || n % cfg.log_every == 0;
    std::vector<GradientReport> reps;
    Matrix avg;
    if (cfg.mode == GradientMode::Exact || log_now) {
      TrainConfig exact_cfg = cfg;
      exact_cfg.mode = GradientMode::Exact;
      avg = averaged_gradient(problems, res.K, exact_cfg, 0, &reps);
    }
    if (log_now) {
      double rho_max = 0.0;
      for (const auto& r : reps) rho_max = std::max(rho_max, r.cost.rho);
      Vector b = Vector::Constant(N, std::numeric_limits<double>::quiet_NaN());
      if (cfg.heterogeneity_every > 0 && (n % cfg.heterogeneity_every == 0 || last)) {
        HeterogeneityConfig hc = cfg.heterogeneity;
        hc.keep_matrices = false;
        b = average_heterogeneity(problems, res.K, hc, cfg.threads).b_avg;
      }
      const double gnorm = avg.norm();
      for (std::size_t i = 0; i < N; ++i) {
        TrainLogRow row;
        row.iteration = n;
        row.task = i;
        row.task_id = problems[i].task.id;
        row.cost = reps[i].cost.J;
        row.gap = reps[i].cost.J - problems[i].J_star;
        row.grad_norm = gnorm;
        row.rho_max = rho_max;
        row.b_i = b(static_cast<Eigen::Index>(i));
        res.log.push_back(std::move(row));
      }
      if (test) {
        res.eval.push_back(detail::eval_row(problems, res.K, n, "train"));
        res.eval.push_back(detail::eval_row(*test, res.K, n, "test"));
      }
    }
    if (last) break;
    if (cfg.mode == GradientMode::ZerothOrder) {
      try {
        avg = averaged_gradient(problems, res.K, cfg, static_cast<std::uint64_t>(n));
      } catch (const Error& e) {
        res.early_stopped = true;
        res.stop_reason = e.what();
        break;
      }
    }
    const Matrix next = res.K - res.alpha * avg;
    try {
      stability_guard(problems, next, cfg.stability_margin);
    } catch (const Error& e) {
      res.early_stopped = true;
      res.stop_reason = e.what();
      break;
    }
    res.K = next;
    res.iterations_completed = n + 1;
  }
  return res;
}

struct GeneralizationReport {
  double train_mean = 0.0;
  double test_mean = 0.0;
  double abs_gap = 0.0;
  double max_train_cost = 0.0;
  int n_test_stable = 0;
  int n_test = 0;
  double fraction_stabilized = 0.0;
  std::vector<double> train_costs;  // NaN for destabilized tasks
  std::vector<double> test_costs;

  /// (max train cost) sqrt(log(4/delta) / (2 N_train)).
  double hoeffding_bound(double delta) const {
    return max_train_cost * std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(train_costs.size())));
  }
};

inline GeneralizationReport evaluate_generalization(const Matrix& K, const std::vector<TaskProblem>& train,
                                                    const std::vector<TaskProblem>& test) {
  GeneralizationReport rep;
  const auto costs = [&](const std::vector<TaskProblem>& set, std::vector<double>& out, int& stable,
                         double& mean) {
    double s = 0.0;
    stable = 0;
    for (const TaskProblem& pr : set) {
      if (closed_loop_radius(pr.task, pr.lift, K) < 1.0) {
        const double J = cost_exact(pr.task, pr.lift, K).J;
        out.push_back(J);
        s += J;
        ++stable;
      } else {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    mean = stable > 0 ? s / stable : std::numeric_limits<double>::quiet_NaN();
  };
  int train_stable = 0;
  costs(train, rep.train_costs, train_stable, rep.train_mean);
  costs(test, rep.test_costs, rep.n_test_stable, rep.test_mean);
  rep.n_test = static_cast<int>(test.size());
  rep.fraction_stabilized = rep.n_test > 0 ? static_cast<double>(rep.n_test_stable) / rep.n_test : 1.0;
  rep.abs_gap = std::abs(rep.train_mean - rep.test_mean);
  for (double c : rep.train_costs)
    if (std::isfinite(c)) rep.max_train_cost = std::max(rep.max_train_cost, c);
  return rep;
}

struct BoundAuditRow {
  std::size_t task = 0;
  std::string task_id;
  double gap = 0.0;
  double gamma = 0.0;
  double b_i = 0.0;
  double bound = 0.0;    // b_i / gamma_i
  double bound_3x = 0.0;  // 3 b_i / gamma_i
  bool holds = false;
  bool holds_3x = false;
};

/// Compares each task's gap with ||S|| ||Sigma_star|| b_i / (4 lambda_min(Sigma_nu)^2 lambda_min(R)),
/// which equals b_i / gamma_i. The bound is +inf when gamma_i = 0 and b_i > 0.
inline std::vector<BoundAuditRow> bound_audit(const std::vector<TaskProblem>& problems, const Matrix& K,
                                              const Vector& b_avg) {
  if (b_avg.size() != static_cast<Eigen::Index>(problems.size())) {
    throw Error(ErrorKind::Validation, "bound_audit: one heterogeneity value per task is required");
  }
  std::vector<BoundAuditRow> rows;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const TaskProblem& pr = problems[i];
    BoundAuditRow row;
    row.task = i;
    row.task_id = pr.task.id;
    row.gap = optimality_gap(pr, K);
    row.gamma = pr.gamma;
    row.b_i = b_avg(static_cast<Eigen::Index>(i));
    if (row.b_i == 0.0) {
      row.bound = 0.0;
    } else if (pr.gamma > 0.0) {
      row.bound = row.b_i / pr.gamma;
    } else {
      row.bound = std::numeric_limits<double>::infinity();
    }
    row.bound_3x = 3.0 * row.bound;
    const double tol = 1e-9 * (1.0 + std::abs(pr.J_star));
    row.holds = row.gap <= row.bound + tol;
    row.holds_3x = row.gap <= row.bound_3x + tol;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mtlqg
