#pragma once

// JSON (de)serialization of tasks, controllers and certificates, CSV output
// in full double precision, and metadata sidecars.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "mtlqg/trainer.hpp"

namespace mtlqg {

using json = nlohmann::json;

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17e", x);
  return buf;
}

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw Error(ErrorKind::Validation, name + ": expected a non-empty nested array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorKind::Validation, name + ": rows have unequal lengths");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorKind::Validation, name + ": non-numeric entry");
      M(i, c) = v.get<double>();
    }
  }
  return M;
}

inline json task_to_json(const LqgTask& t) {
  json j;
  j["id"] = t.id;
  j["A"] = matrix_to_json(t.A);
  j["B"] = matrix_to_json(t.B);
  j["C"] = matrix_to_json(t.C);
  j["W"] = matrix_to_json(t.W);
  j["V"] = matrix_to_json(t.V);
  j["Q"] = matrix_to_json(t.Q);
  j["R"] = matrix_to_json(t.R);
  j["params"] = json::object();
  for (const auto& [k, v] : t.params) j["params"][k] = v;
  return j;
}

/// Parses and validates a task (dimensions, covariances, controllability and observability).
inline LqgTask task_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Validation, "task: expected an object");
  LqgTask t;
  t.id = j.value("id", std::string("task"));
  for (const char* key : {"A", "B", "C", "W", "V", "Q", "R"}) {
    if (!j.contains(key)) throw Error(ErrorKind::Validation, "task '" + t.id + "': missing " + key);
  }
  t.A = matrix_from_json(j["A"], t.id + ".A");
  t.B = matrix_from_json(j["B"], t.id + ".B");
  t.C = matrix_from_json(j["C"], t.id + ".C");
  t.W = matrix_from_json(j["W"], t.id + ".W");
  t.V = matrix_from_json(j["V"], t.id + ".V");
  t.Q = matrix_from_json(j["Q"], t.id + ".Q");
  t.R = matrix_from_json(j["R"], t.id + ".R");
  if (j.contains("params") && j["params"].is_object()) {
    for (const auto& [k, v] : j["params"].items()) t.params[k] = v.get<double>();
  }
  validate_task(t);
  return t;
}

inline json interval_to_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

inline Interval interval_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(ErrorKind::Validation, name + ": expected [lo, hi]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json distribution_to_json(const TaskDistributionSpec& s) {
  return json{{"benchmark", to_string(s.benchmark)},
              {"mass", interval_to_json(s.mass)},
              {"cart_mass", interval_to_json(s.cart_mass)},
              {"length", interval_to_json(s.length)},
              {"q", interval_to_json(s.q)},
              {"r", interval_to_json(s.r)},
              {"w_scale", s.w_scale},
              {"v_scale", s.v_scale},
              {"dt", s.dt},
              {"seed", s.seed},
              {"count", s.count},
              {"first_index", s.first_index}};
}

/// Starts from the benchmark defaults and overrides whatever keys are present.
inline TaskDistributionSpec distribution_from_json(const json& j) {
  const Benchmark b = benchmark_from_string(j.value("benchmark", std::string("cartpole")));
  TaskDistributionSpec s = b == Benchmark::CartPole ? cartpole_distribution(1, 0) : pendulum_distribution(1, 0);
  if (j.contains("mass")) s.mass = interval_from_json(j["mass"], "mass");
  if (j.contains("cart_mass")) s.cart_mass = interval_from_json(j["cart_mass"], "cart_mass");
  if (j.contains("length")) s.length = interval_from_json(j["length"], "length");
  if (j.contains("q")) s.q = interval_from_json(j["q"], "q");
  if (j.contains("r")) s.r = interval_from_json(j["r"], "r");
  s.w_scale = j.value("w_scale", s.w_scale);
  s.v_scale = j.value("v_scale", s.v_scale);
  s.dt = j.value("dt", s.dt);
  s.seed = j.value("seed", s.seed);
  s.count = j.value("count", s.count);
  s.first_index = j.value("first_index", s.first_index);
  s.validate();
  return s;
}

struct TaskSet {
  std::optional<TaskDistributionSpec> distribution;
  std::vector<LqgTask> train;
  std::vector<LqgTask> test;
};

inline json task_set_to_json(const TaskSet& ts) {
  json j;
  j["format"] = "mtlqg-tasks";
  j["version"] = 1;
  if (ts.distribution) j["distribution"] = distribution_to_json(*ts.distribution);
  j["train"] = json::array();
  for (const auto& t : ts.train) j["train"].push_back(task_to_json(t));
  j["test"] = json::array();
  for (const auto& t : ts.test) j["test"].push_back(task_to_json(t));
  return j;
}

inline TaskSet task_set_from_json(const json& j) {
  if (!j.is_object() || !j.contains("train") || !j["train"].is_array()) {
    throw Error(ErrorKind::Validation, "task set: missing 'train' array");
  }
  TaskSet ts;
  if (j.contains("distribution")) ts.distribution = distribution_from_json(j["distribution"]);
  for (const auto& t : j["train"]) ts.train.push_back(task_from_json(t));
  if (j.contains("test"))
    for (const auto& t : j["test"]) ts.test.push_back(task_from_json(t));
  if (ts.train.empty()) throw Error(ErrorKind::Validation, "task set: no training tasks");
  return ts;
}

inline json controller_to_json(const LiftedController& K) {
  return json{{"p", K.p}, {"K", matrix_to_json(K.K)}};
}

inline LiftedController controller_from_json(const json& j) {
  if (!j.is_object() || !j.contains("K") || !j.contains("p")) {
    throw Error(ErrorKind::Validation, "controller: expected {\"p\": ..., \"K\": [[...]]}");
  }
  return {matrix_from_json(j["K"], "controller.K"), j["p"].get<int>()};
}

inline json certificate_to_json(const BisimCertificate& c, std::size_t i, std::size_t j, bool with_matrix) {
  json out{{"i", i},
           {"j", j},
           {"b_ij", c.b_ij},
           {"b_lyapunov", c.b_lyapunov},
           {"lambda", c.lambda},
           {"eta", c.eta},
           {"zeta", c.zeta},
           {"lambda_prime", c.lambda_prime},
           {"rho_joint", c.rho_joint},
           {"epsilon_margin", c.epsilon_margin},
           {"backend", to_string(c.backend)},
           {"lmi_output_bound_min_eig", c.residuals.output_bound},
           {"lmi_decay_min_eig", c.residuals.decay},
           {"M_norm", c.residuals.scale}};
  if (with_matrix && c.M.size() > 0) out["M"] = matrix_to_json(c.M);
  return out;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, "'" + path.string() + "': " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

/// FNV-1a over the canonical (sorted-key) dump.
inline std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Buffered CSV table; numbers are written with format_double.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) { line(header_); }

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> v{cell(cells)...};
    if (v.size() != header_.size()) throw std::logic_error("CsvTable: row width mismatch");
    line(v);
  }

  const std::vector<std::string>& header() const { return header_; }
  std::string str() const { return out_.str(); }

 private:
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class I, class = std::enable_if_t<std::is_integral_v<I>>>
  static std::string cell(I x) { return std::to_string(x); }

  void line(const std::vector<std::string>& v) {
    for (std::size_t k = 0; k < v.size(); ++k) out_ << (k ? "," : "") << v[k];
    out_ << '\n';
  }

  std::vector<std::string> header_;
  std::ostringstream out_;
};

/// Writes `path` and `path.meta.json` (config hash, seed, command, columns).
inline void write_csv(const std::filesystem::path& path, const CsvTable& table, const json& config,
                      std::uint64_t seed, const std::string& command) {
  write_text_file(path, table.str());
  json meta{{"file", path.filename().string()},
            {"command", command},
            {"seed", seed},
            {"config_hash", config_hash(config)},
            {"columns", table.header()}};
  write_json_file(path.string() + ".meta.json", meta);
}

inline CsvTable train_log_table(const TrainResult& res) {
  CsvTable t({"iteration", "task_id", "cost", "gap", "grad_norm", "rho_max", "b_i"});
  for (const auto& r : res.log) t.row(r.iteration, r.task_id, r.cost, r.gap, r.grad_norm, r.rho_max, r.b_i);
  return t;
}

inline CsvTable eval_table(const std::vector<EvalRow>& rows) {
  CsvTable t({"iteration", "split", "mean_gap", "std_gap", "mean_cost", "n_stable", "n_total"});
  for (const auto& r : rows) t.row(r.iteration, r.split, r.mean_gap, r.std_gap, r.mean_cost, r.n_stable, r.n_total);
  return t;
}

}  // namespace mtlqg
