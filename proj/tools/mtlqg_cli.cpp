// Command-line front end: task generation, training, heterogeneity
// certificates, variance study, evaluation and figure data.
//
// Exit codes: 0 success, 2 invalid input or I/O, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mtlqg/mtlqg.hpp"

namespace fs = std::filesystem;
using namespace mtlqg;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> mode;
  std::optional<int> threads;
  std::string tasks;
  std::string controller;
  bool refine = false;
  bool no_matrices = false;
  bool audit = false;
  std::string figure;
};

std::string g_command;

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig c = o.config.empty() ? default_config(Benchmark::CartPole)
                                        : experiment_config_from_json(read_json_file(o.config));
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.mode) c.train.mode = gradient_mode_from_string(*o.mode);
  if (o.refine) c.train.heterogeneity.refine = true;
  if (c.threads < 1) throw Error(ErrorKind::Validation, "--threads must be positive");
  c.sync();
  return c;
}

TaskSet load_tasks(const ExperimentConfig& c, const Options& o) {
  if (!o.tasks.empty()) return task_set_from_json(read_json_file(o.tasks));
  TaskSet ts;
  ts.distribution = c.train_spec();
  ts.train = sample_training_set(c.train_spec());
  if (c.n_test > 0) ts.test = sample_training_set(c.test_spec());
  return ts;
}

LqgTask nominal_for(const TaskSet& ts, const std::vector<TaskProblem>& problems) {
  return ts.distribution ? nominal_task(*ts.distribution) : mean_task(problems);
}

Matrix controller_for(const ExperimentConfig& c, const Options& o, const TaskSet& ts,
                      const std::vector<TaskProblem>& problems) {
  if (!o.controller.empty()) {
    const LiftedController K = controller_from_json(read_json_file(o.controller));
    if (K.p != c.p) {
      throw Error(ErrorKind::Validation, "controller history length " + std::to_string(K.p) +
                                             " differs from config p = " + std::to_string(c.p));
    }
    return K.K;
  }
  return initial_controller(problems, nominal_for(ts, problems), c.p).K.K;
}

fs::path out_dir(const Options& o, const char* fallback) {
  const fs::path d = o.out.empty() ? fs::path(fallback) : fs::path(o.out);
  fs::create_directories(d);
  return d;
}

void log(const std::string& msg) { std::fprintf(stderr, "[mtlqg] %s\n", msg.c_str()); }

int finish_training(const ExperimentConfig& c, const TrainResult& res, const fs::path& dir) {
  json summary{{"alpha", res.alpha},
               {"iterations_completed", res.iterations_completed},
               {"early_stopped", res.early_stopped},
               {"stop_reason", res.stop_reason}};
  if (!res.log.empty()) {
    const long last = res.log.back().iteration;
    double s = 0.0;
    int n = 0;
    for (const auto& r : res.log)
      if (r.iteration == last) s += r.gap, ++n;
    summary["final_mean_gap"] = s / n;
  }
  write_json_file(dir / "summary.json", summary);
  write_json_file(dir / "config.json", experiment_config_to_json(c));
  if (res.early_stopped) {
    log("stopped early: " + res.stop_reason);
    return 3;
  }
  return 0;
}

int cmd_generate(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const TaskSet ts = load_tasks(c, Options{});
  const fs::path path = o.out.empty() ? fs::path("tasks.json") : fs::path(o.out);
  write_json_file(path, task_set_to_json(ts));
  log("wrote " + std::to_string(ts.train.size()) + " train / " + std::to_string(ts.test.size()) +
      " test tasks to " + path.string());
  return 0;
}

int cmd_train(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const TaskSet ts = load_tasks(c, o);
  const auto train = make_problems(ts.train, c.p, c.threads);
  const auto test = make_problems(ts.test, c.p, c.threads);
  const Matrix K0 = controller_for(c, o, ts, train);
  const fs::path dir = out_dir(o, "run");
  const json cj = experiment_config_to_json(c);
  const TrainResult res = train_multitask(train, K0, c.train, test.empty() ? nullptr : &test);
  write_json_file(dir / "controller.json", controller_to_json({res.K, c.p}));
  write_csv(dir / "gaps.csv", train_log_table(res), cj, c.seed, g_command);
  if (!test.empty()) write_csv(dir / "eval.csv", eval_table(res.eval), cj, c.seed, g_command);
  return finish_training(c, res, dir);
}

int cmd_heterogeneity(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const TaskSet ts = load_tasks(c, o);
  const auto problems = make_problems(ts.train, c.p, c.threads);
  const Matrix K = controller_for(c, o, ts, problems);
  HeterogeneityConfig hc = c.train.heterogeneity;
  hc.keep_matrices = !o.no_matrices;
  const HeterogeneityReport rep = average_heterogeneity(problems, K, hc, c.threads);
  const fs::path dir = out_dir(o, "heterogeneity");
  const json cj = experiment_config_to_json(c);
  write_csv(dir / "heterogeneity.csv", heterogeneity_table(rep), cj, c.seed, g_command);
  json certs = json::array();
  std::size_t k = 0;
  for (std::size_t i = 0; i < problems.size(); ++i)
    for (std::size_t j = i + 1; j < problems.size(); ++j)
      certs.push_back(certificate_to_json(rep.certificates[k++], i, j, hc.keep_matrices));
  json b = json::array();
  for (Eigen::Index i = 0; i < rep.b_avg.size(); ++i) b.push_back(rep.b_avg(i));
  write_json_file(dir / "certificates.json", json{{"b_avg", b}, {"pairs", certs}});
  return 0;
}

int cmd_variance(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const TaskSet ts = load_tasks(c, o);
  const auto problems = make_problems(ts.train, c.p, c.threads);
  const Matrix K = controller_for(c, o, ts, problems);
  const auto rows = variance_study(problems, K, c.variance);
  const fs::path dir = out_dir(o, "variance");
  write_csv(dir / "variance.csv", variance_table(rows), experiment_config_to_json(c), c.seed, g_command);
  std::vector<double> x, y;
  for (const auto& r : rows) x.push_back(r.N), y.push_back(r.relative_rmse);
  if (rows.size() >= 2) write_json_file(dir / "summary.json", json{{"loglog_slope", loglog_slope(x, y)}});
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.controller.empty()) throw Error(ErrorKind::Validation, "evaluate: --controller is required");
  const ExperimentConfig c = load_config(o);
  const TaskSet ts = load_tasks(c, o);
  const auto train = make_problems(ts.train, c.p, c.threads);
  const auto test = make_problems(ts.test, c.p, c.threads);
  const Matrix K = controller_for(c, o, ts, train);
  const GeneralizationReport g = evaluate_generalization(K, train, test);
  json out{{"train_mean_cost", g.train_mean},
           {"test_mean_cost", g.test_mean},
           {"abs_gap", g.abs_gap},
           {"max_train_cost", g.max_train_cost},
           {"hoeffding_bound_delta_0.1", g.hoeffding_bound(0.1)},
           {"n_test", g.n_test},
           {"n_test_stable", g.n_test_stable},
           {"fraction_stabilized", g.fraction_stabilized}};
  if (o.audit) {
    HeterogeneityConfig hc = c.train.heterogeneity;
    hc.keep_matrices = false;
    const auto rep = average_heterogeneity(train, K, hc, c.threads);
    json rows = json::array();
    for (const auto& r : bound_audit(train, K, rep.b_avg)) {
      rows.push_back({{"task_id", r.task_id}, {"gap", r.gap}, {"gamma", r.gamma}, {"b_i", r.b_i},
                      {"bound", std::isinf(r.bound) ? json("inf") : json(r.bound)},
                      {"holds", r.holds}, {"holds_3x", r.holds_3x}});
    }
    out["bound_audit"] = rows;
  }
  const fs::path dir = out_dir(o, "evaluation");
  write_json_file(dir / "generalization.json", out);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_reproduce(const Options& o) {
  if (o.figure == "fig3") return cmd_variance(o);
  const ExperimentConfig c = load_config(o);
  const TaskSet ts = load_tasks(c, o);
  const auto train = make_problems(ts.train, c.p, c.threads);
  const auto test = make_problems(ts.test, c.p, c.threads);
  const Matrix K0 = controller_for(c, o, ts, train);
  const fs::path dir = out_dir(o, o.figure.c_str());
  const json cj = experiment_config_to_json(c);
  const bool fig2 = o.figure == "fig2";
  if (fig2 && test.empty()) throw Error(ErrorKind::Validation, "fig2 needs tasks.test > 0");
  const TrainResult res = train_multitask(train, K0, c.train, fig2 ? &test : nullptr);
  if (fig2) {
    write_csv(dir / "eval.csv", eval_table(res.eval), cj, c.seed, g_command);
  } else {
    write_csv(dir / "gaps.csv", train_log_table(res), cj, c.seed, g_command);
  }
  write_json_file(dir / "controller.json", controller_to_json({res.K, c.p}));
  return finish_training(c, res, dir);
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Multitask LQG policy gradient with output feedback"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub, bool with_tasks) {
    sub->add_option("--config", o.config, "Experiment config JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--out", o.out, "Output directory (file for generate-tasks)");
    sub->add_option("--threads", o.threads, "Worker threads");
    if (with_tasks) {
      sub->add_option("--tasks", o.tasks, "Task set JSON written by generate-tasks")->check(CLI::ExistingFile);
      sub->add_option("--controller", o.controller, "Controller JSON {p, K}")->check(CLI::ExistingFile);
    }
  };

  auto* gen = app.add_subcommand("generate-tasks", "Sample train/test tasks");
  common(gen, false);
  auto* train = app.add_subcommand("train", "Run multitask policy gradient");
  common(train, true);
  train->add_option("--mode", o.mode, "Gradient oracle")->check(CLI::IsMember({"exact", "zo"}));
  train->add_flag("--refine", o.refine, "Refine heterogeneity certificates when logging b_i");
  auto* het = app.add_subcommand("heterogeneity", "Pairwise bisimulation certificates");
  common(het, true);
  het->add_flag("--refine", o.refine, "Refine M by semidefinite optimization");
  het->add_flag("--no-matrices", o.no_matrices, "Omit M from certificates.json");
  auto* var = app.add_subcommand("variance-study", "Estimator error against number of tasks");
  common(var, true);
  auto* ev = app.add_subcommand("evaluate", "Train/test cost gap of a controller");
  common(ev, true);
  ev->add_flag("--audit", o.audit, "Also audit the per-task gap bound");
  auto* rep = app.add_subcommand("reproduce", "Write the data behind a figure");
  common(rep, true);
  rep->add_option("figure", o.figure, "fig1 (training gaps), fig2 (generalization), fig3 (variance)")
      ->required()
      ->check(CLI::IsMember({"fig1", "fig2", "fig3"}));
  rep->add_option("--mode", o.mode, "Gradient oracle")->check(CLI::IsMember({"exact", "zo"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*train) return cmd_train(o);
    if (*het) return cmd_heterogeneity(o);
    if (*var) return cmd_variance(o);
    if (*ev) return cmd_evaluate(o);
    if (*rep) return cmd_reproduce(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.is_validation() ? 2 : 3;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
