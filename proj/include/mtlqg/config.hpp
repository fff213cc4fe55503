#pragma once

// Experiment configuration shared by the CLI and the acceptance driver.
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <set>
#include <string>
#include <vector>

#include "mtlqg/experiments.hpp"
#include "mtlqg/io.hpp"

namespace mtlqg {

struct ExperimentConfig {
  Benchmark benchmark = Benchmark::CartPole;
  std::uint64_t seed = 0;
  int p = 10;
  int threads = 1;
  int n_train = 100;
  int n_test = 50;
  TaskDistributionSpec distribution = cartpole_distribution(100, 0);
  TrainConfig train;
  VarianceStudyConfig variance;

  /// Propagates the top-level seed and thread count into the nested configs.
  void sync() {
    train.seed = seed;
    train.rollout.seed = seed;
    train.threads = threads;
    variance.threads = threads;
    variance.rollout = train.rollout;
  }

  /// Training set: indices [0, n_train).
  TaskDistributionSpec train_spec() const {
    TaskDistributionSpec s = distribution;
    s.seed = seed;
    s.count = n_train;
    s.first_index = 0;
    return s;
  }

  /// Held-out set: indices [n_train, n_train + n_test) of the same stream.
  TaskDistributionSpec test_spec() const {
    TaskDistributionSpec s = train_spec();
    s.count = n_test;
    s.first_index = n_train;
    return s;
  }
};

/// Defaults used for the two benchmarks.
inline ExperimentConfig default_config(Benchmark b) {
  ExperimentConfig c;
  c.benchmark = b;
  if (b == Benchmark::CartPole) {
    c.p = 10;
    c.n_train = 100;
    c.n_test = 50;
    c.distribution = cartpole_distribution(100, 0);
    c.train.alpha = 1e-7;
    c.train.rollout.r = 1e-3;
  } else {
    c.p = 12;
    c.n_train = 300;
    c.n_test = 20;
    c.distribution = pendulum_distribution(300, 0);
    c.train.alpha = 1e-2;
    c.train.rollout.r = 1e-2;
  }
  c.train.iterations = 100000;
  c.train.log_every = 100;
  c.train.rollout.n_s = 200;
  c.train.rollout.tau = 200;
  c.variance.grid = {1, 2, 5, 10, 25, 50};
  c.variance.repetitions = 20;
  c.sync();
  return c;
}

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorKind::Validation, where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw Error(ErrorKind::Validation, where + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Validation, where + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const json& j) {
  using detail::read;
  detail::check_keys(j, "config",
                     {"benchmark", "seed", "p", "threads", "tasks", "train", "rollout", "heterogeneity", "variance"});
  ExperimentConfig c = default_config(benchmark_from_string(j.value("benchmark", std::string("cartpole"))));
  read(j, "seed", c.seed, "config");
  read(j, "p", c.p, "config");
  read(j, "threads", c.threads, "config");

  if (j.contains("tasks")) {
    const json& t = j["tasks"];
    detail::check_keys(t, "tasks", {"train", "test", "distribution"});
    read(t, "train", c.n_train, "tasks");
    read(t, "test", c.n_test, "tasks");
    if (t.contains("distribution")) {
      json d = t["distribution"];
      d["benchmark"] = to_string(c.benchmark);
      c.distribution = distribution_from_json(d);
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    detail::check_keys(t, "train", {"alpha", "auto_alpha", "iterations", "mode", "log_every",
                                    "heterogeneity_every", "stability_margin"});
    read(t, "alpha", c.train.alpha, "train");
    read(t, "auto_alpha", c.train.auto_alpha, "train");
    read(t, "iterations", c.train.iterations, "train");
    read(t, "log_every", c.train.log_every, "train");
    read(t, "heterogeneity_every", c.train.heterogeneity_every, "train");
    read(t, "stability_margin", c.train.stability_margin, "train");
    if (t.contains("mode")) c.train.mode = gradient_mode_from_string(t["mode"].get<std::string>());
  }
  if (j.contains("rollout")) {
    const json& r = j["rollout"];
    detail::check_keys(r, "rollout", {"tau", "n_c", "n_s", "r", "burn_in"});
    read(r, "tau", c.train.rollout.tau, "rollout");
    read(r, "n_c", c.train.rollout.n_c, "rollout");
    read(r, "n_s", c.train.rollout.n_s, "rollout");
    read(r, "r", c.train.rollout.r, "rollout");
    read(r, "burn_in", c.train.rollout.burn_in, "rollout");
  }
  if (j.contains("heterogeneity")) {
    const json& h = j["heterogeneity"];
    detail::check_keys(h, "heterogeneity", {"relative_margin", "refine", "refine_budget"});
    read(h, "relative_margin", c.train.heterogeneity.relative_margin, "heterogeneity");
    read(h, "refine", c.train.heterogeneity.refine, "heterogeneity");
    read(h, "refine_budget", c.train.heterogeneity.refine_budget, "heterogeneity");
  }
  if (j.contains("variance")) {
    const json& v = j["variance"];
    detail::check_keys(v, "variance", {"grid", "repetitions"});
    read(v, "grid", c.variance.grid, "variance");
    read(v, "repetitions", c.variance.repetitions, "variance");
  }

  if (c.p < 1) throw Error(ErrorKind::Validation, "config.p must be positive");
  if (c.threads < 1) throw Error(ErrorKind::Validation, "config.threads must be positive");
  if (c.n_train < 1 || c.n_test < 0) throw Error(ErrorKind::Validation, "tasks.train must be positive, tasks.test non-negative");
  if (!(c.train.heterogeneity.relative_margin > 0.0 && c.train.heterogeneity.relative_margin < 1.0)) {
    throw Error(ErrorKind::Validation, "heterogeneity.relative_margin must lie in (0, 1)");
  }
  c.sync();
  c.train.validate();
  c.train.rollout.validate(c.p);
  return c;
}

inline json experiment_config_to_json(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  json dist = distribution_to_json(c.distribution);
  for (const char* k : {"benchmark", "seed", "count", "first_index"}) dist.erase(k);
  return json{{"benchmark", to_string(c.benchmark)},
              {"seed", c.seed},
              {"p", c.p},
              {"threads", c.threads},
              {"tasks", {{"train", c.n_train}, {"test", c.n_test}, {"distribution", dist}}},
              {"train",
               {{"alpha", t.alpha},
                {"auto_alpha", t.auto_alpha},
                {"iterations", t.iterations},
                {"mode", to_string(t.mode)},
                {"log_every", t.log_every},
                {"heterogeneity_every", t.heterogeneity_every},
                {"stability_margin", t.stability_margin}}},
              {"rollout",
               {{"tau", t.rollout.tau},
                {"n_c", t.rollout.n_c},
                {"n_s", t.rollout.n_s},
                {"r", t.rollout.r},
                {"burn_in", t.rollout.burn_in}}},
              {"heterogeneity",
               {{"relative_margin", t.heterogeneity.relative_margin},
                {"refine", t.heterogeneity.refine},
                {"refine_budget", t.heterogeneity.refine_budget}}},
              {"variance", {{"grid", c.variance.grid}, {"repetitions", c.variance.repetitions}}}};
}

inline CsvTable variance_table(const std::vector<VarianceRow>& rows) {
  CsvTable t({"N", "rmse", "relative_rmse", "exact_norm", "reference_norm", "repetitions"});
  for (const auto& r : rows) t.row(r.N, r.rmse, r.relative_rmse, r.exact_norm, r.reference_norm, r.repetitions);
  return t;
}

inline CsvTable heterogeneity_table(const HeterogeneityReport& rep) {
  CsvTable t({"i", "j", "eps_het", "b_ij", "b_lyapunov", "lambda", "backend"});
  std::size_t k = 0;
  const auto N = static_cast<std::size_t>(rep.b.rows());
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j, ++k) {
      const BisimCertificate& c = rep.certificates.at(k);
      t.row(i, j, rep.eps_het(i, j), c.b_ij, c.b_lyapunov, c.lambda, to_string(c.backend));
    }
  }
  return t;
}

}  // namespace mtlqg
