#pragma once

// LQG tasks, the cart-pole and inverted-pendulum benchmarks, and seeded
// sampling of task distributions.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtlqg/linalg.hpp"
#include "mtlqg/random.hpp"

namespace mtlqg {

/// One partially observed system together with its quadratic objective:
///   x+ = A x + B u + w,  y = C x + v,  w ~ N(0, W),  v ~ N(0, V),
///   J = lim (1/T) E sum (y'Qy + u'Ru).
struct LqgTask {
  std::string id;
  Matrix A, B, C, W, V, Q, R;
  /// Physical and cost parameters the task was generated from (may be empty).
  std::map<std::string, double> params;

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index nu() const { return B.cols(); }
  Eigen::Index ny() const { return C.rows(); }
};

/// Checks dimensions, covariance/cost definiteness and controllability /
/// observability. Throws Validation or AssumptionViolated.
inline void validate_task(const LqgTask& t) {
  const auto n = t.nx();
  const auto m = t.nu();
  const auto k = t.ny();
  auto dims = [&](const Matrix& X, Eigen::Index r, Eigen::Index c, const char* name) {
    if (X.rows() != r || X.cols() != c) {
      throw Error(ErrorKind::Validation, "task '" + t.id + "': " + name + " has wrong dimensions");
    }
    if (!X.allFinite()) {
      throw Error(ErrorKind::Validation, "task '" + t.id + "': " + name + " has non-finite entries");
    }
  };
  if (n == 0 || m == 0 || k == 0) throw Error(ErrorKind::Validation, "task '" + t.id + "': empty dimensions");
  dims(t.A, n, n, "A");
  dims(t.B, n, m, "B");
  dims(t.C, k, n, "C");
  dims(t.W, n, n, "W");
  dims(t.V, k, k, "V");
  dims(t.Q, k, k, "Q");
  dims(t.R, m, m, "R");
  auto psd = [&](const Matrix& X, bool strict, const char* name) {
    if (!is_symmetric(X, 1e-9)) {
      throw Error(ErrorKind::Validation, "task '" + t.id + "': " + name + " is not symmetric");
    }
    const double lo = min_eigenvalue(X);
    if (strict ? !(lo > 0.0) : lo < -1e-12 * (1.0 + X.norm())) {
      throw Error(ErrorKind::Validation, "task '" + t.id + "': " + name +
                                             (strict ? " is not positive definite" : " is not PSD"));
    }
  };
  psd(t.W, false, "W");
  psd(t.V, true, "V");
  psd(t.Q, false, "Q");
  psd(t.R, true, "R");
  const RankTest rt = check_ctrb_obsv(t.A, t.B, t.C);
  if (!rt.controllable || !rt.observable) {
    throw Error(ErrorKind::AssumptionViolated,
                "task '" + t.id + "': (A,B) controllable = " + (rt.controllable ? "yes" : "no") +
                    ", (A,C) observable = " + (rt.observable ? "yes" : "no"));
  }
}

inline std::pair<Matrix, Matrix> euler_discretize(const Matrix& Ac, const Matrix& Bc, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::Validation, "euler_discretize: dt must be positive");
  Matrix A = Matrix::Identity(Ac.rows(), Ac.cols()) + dt * Ac;
  Matrix B = dt * Bc;
  return {std::move(A), std::move(B)};
}

inline constexpr double kGravity = 9.81;
inline constexpr double kDefaultDt = 0.05;

/// Linearized cart-pole (state: cart position, cart velocity, pole angle,
/// pole rate), measuring cart position and the sum of the two velocities.
inline LqgTask make_cartpole_task(double m_pole, double m_cart, double length, double q, double r,
                                  double w_scale, double v_scale, double dt = kDefaultDt,
                                  double g = kGravity) {
  if (!(m_pole > 0 && m_cart > 0 && length > 0)) {
    throw Error(ErrorKind::Validation, "cart-pole: physical parameters must be positive");
  }
  Matrix Ac = Matrix::Zero(4, 4);
  Ac(0, 1) = 1.0;
  Ac(1, 2) = m_pole / m_cart * g;
  Ac(2, 3) = 1.0;
  Ac(3, 2) = (m_pole + m_cart) / (length * m_cart) * g;
  Matrix Bc = Matrix::Zero(4, 1);
  Bc(1, 0) = 1.0 / m_cart;
  Bc(3, 0) = 1.0 / (length * m_cart);

  LqgTask t;
  std::tie(t.A, t.B) = euler_discretize(Ac, Bc, dt);
  t.C = Matrix::Zero(2, 4);
  t.C(0, 0) = 1.0;
  t.C(1, 1) = 1.0;
  t.C(1, 3) = 1.0;
  // Output cost is q * I on the measured output y.
  t.Q = q * Matrix::Identity(2, 2);
  t.R = r * Matrix::Identity(1, 1);
  t.W = w_scale * Matrix::Identity(4, 4);
  t.V = v_scale * Matrix::Identity(2, 2);
  t.params = {{"m_pole", m_pole}, {"m_cart", m_cart}, {"length", length},
              {"q", q},           {"r", r},           {"dt", dt}};
  return t;
}

/// Single-link inverted pendulum about the upright equilibrium; measures
/// the angle.
inline LqgTask make_pendulum_task(double mass, double length, double q, double r, double w_scale,
                                  double v_scale, double dt = kDefaultDt, double g = kGravity) {
  if (!(mass > 0 && length > 0)) {
    throw Error(ErrorKind::Validation, "pendulum: physical parameters must be positive");
  }
  Matrix Ac(2, 2);
  Ac << 0.0, 1.0, g / length, 0.0;
  Matrix Bc(2, 1);
  Bc << 0.0, 1.0 / (mass * length * length);

  LqgTask t;
  std::tie(t.A, t.B) = euler_discretize(Ac, Bc, dt);
  t.C = Matrix(1, 2);
  t.C << 1.0, 0.0;
  t.Q = q * Matrix::Identity(1, 1);
  t.R = r * Matrix::Identity(1, 1);
  t.W = w_scale * Matrix::Identity(2, 2);
  t.V = v_scale * Matrix::Identity(1, 1);
  t.params = {{"mass", mass}, {"length", length}, {"q", q}, {"r", r}, {"dt", dt}};
  return t;
}

enum class Benchmark { CartPole, Pendulum };

inline std::string to_string(Benchmark b) {
  return b == Benchmark::CartPole ? "cartpole" : "pendulum";
}

inline Benchmark benchmark_from_string(const std::string& s) {
  if (s == "cartpole") return Benchmark::CartPole;
  if (s == "pendulum") return Benchmark::Pendulum;
  throw Error(ErrorKind::Validation, "unknown benchmark '" + s + "'");
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const { return 0.5 * (lo + hi); }
};

/// Uniform product distribution over physical and cost parameters. For the
/// pendulum, `mass` is the bob mass and `cart_mass` is unused.
struct TaskDistributionSpec {
  Benchmark benchmark = Benchmark::CartPole;
  Interval mass{0.095, 0.105};
  Interval cart_mass{0.95, 1.05};
  Interval length{0.475, 0.525};
  Interval q{0.095, 0.105};
  Interval r{0.095, 0.105};
  double w_scale = 0.12;
  double v_scale = 0.15;
  double dt = kDefaultDt;
  std::uint64_t seed = 0;
  int count = 1;
  /// Index of the first task; held-out sets use indices past the training set
  /// so both are independent draws keyed by (seed, index).
  int first_index = 0;

  void validate() const {
    if (count < 1) throw Error(ErrorKind::Validation, "task count must be at least 1");
    if (first_index < 0) throw Error(ErrorKind::Validation, "first_index must be non-negative");
    for (const Interval* iv : {&mass, &cart_mass, &length, &q, &r}) {
      if (!(iv->lo <= iv->hi)) throw Error(ErrorKind::Validation, "interval lower bound exceeds upper bound");
      if (!(iv->lo > 0.0)) throw Error(ErrorKind::Validation, "interval bounds must be positive");
    }
    if (!(w_scale >= 0.0) || !(v_scale > 0.0) || !(dt > 0.0)) {
      throw Error(ErrorKind::Validation, "noise scales and dt must be positive");
    }
  }
};

inline TaskDistributionSpec cartpole_distribution(int count, std::uint64_t seed) {
  TaskDistributionSpec s;
  s.count = count;
  s.seed = seed;
  return s;
}

inline TaskDistributionSpec pendulum_distribution(int count, std::uint64_t seed) {
  TaskDistributionSpec s;
  s.benchmark = Benchmark::Pendulum;
  s.mass = {0.475, 0.525};
  s.length = {0.25, 0.35};
  s.w_scale = 0.02;
  s.v_scale = 0.05;
  s.count = count;
  s.seed = seed;
  return s;
}

/// Task at the midpoint of every interval.
inline LqgTask nominal_task(const TaskDistributionSpec& spec) {
  LqgTask t = spec.benchmark == Benchmark::CartPole
                  ? make_cartpole_task(spec.mass.mid(), spec.cart_mass.mid(), spec.length.mid(),
                                       spec.q.mid(), spec.r.mid(), spec.w_scale, spec.v_scale, spec.dt)
                  : make_pendulum_task(spec.mass.mid(), spec.length.mid(), spec.q.mid(),
                                       spec.r.mid(), spec.w_scale, spec.v_scale, spec.dt);
  t.id = "nominal";
  return t;
}

inline std::vector<LqgTask> sample_training_set(const TaskDistributionSpec& spec) {
  spec.validate();
  std::vector<LqgTask> tasks;
  tasks.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    const auto index = static_cast<std::uint64_t>(spec.first_index + i);
    bool accepted = false;
    for (std::uint64_t attempt = 0; attempt < 100 && !accepted; ++attempt) {
      Rng rng(spec.seed, {index, attempt});
      LqgTask t;
      if (spec.benchmark == Benchmark::CartPole) {
        const double mp = rng.uniform(spec.mass.lo, spec.mass.hi);
        const double mc = rng.uniform(spec.cart_mass.lo, spec.cart_mass.hi);
        const double len = rng.uniform(spec.length.lo, spec.length.hi);
        const double q = rng.uniform(spec.q.lo, spec.q.hi);
        const double r = rng.uniform(spec.r.lo, spec.r.hi);
        t = make_cartpole_task(mp, mc, len, q, r, spec.w_scale, spec.v_scale, spec.dt);
      } else {
        const double m = rng.uniform(spec.mass.lo, spec.mass.hi);
        const double len = rng.uniform(spec.length.lo, spec.length.hi);
        const double q = rng.uniform(spec.q.lo, spec.q.hi);
        const double r = rng.uniform(spec.r.lo, spec.r.hi);
        t = make_pendulum_task(m, len, q, r, spec.w_scale, spec.v_scale, spec.dt);
      }
      t.id = "task_" + std::to_string(index);
      try {
        validate_task(t);
        accepted = true;
        tasks.push_back(std::move(t));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::AssumptionViolated) throw;
      }
    }
    if (!accepted) {
      throw IndexedError(ErrorKind::AssumptionViolated,
                         "could not sample a controllable/observable task after 100 attempts",
                         static_cast<long>(index));
    }
  }
  return tasks;
}

}  // namespace mtlqg
