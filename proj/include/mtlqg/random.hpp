#pragma once

// Portable seeded randomness. The standard <random> distributions are not
// specified bit-for-bit across library implementations, so only the engine
// (std::mt19937_64, which is) is used; uniform and normal variates are
// derived here. Substreams are keyed by index tuples through SplitMix64 so
// results do not depend on evaluation order or thread schedule.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include "mtlqg/linalg.hpp"

namespace mtlqg {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic key for the substream identified by (seed, k1, k2, ...).
inline std::uint64_t substream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t key) : engine_(key) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
      : engine_(substream_key(seed, keys)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Square-root factor F of a covariance (F F^T = Sigma). Cholesky when
/// positive definite, symmetric eigen square root otherwise.
inline Matrix covariance_factor(const Matrix& sigma) {
  Eigen::LLT<Matrix> llt(symmetrize(sigma));
  if (llt.info() == Eigen::Success) return llt.matrixL();
  return psd_sqrt(sigma);
}

}  // namespace mtlqg
