#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include "noisylmi/errors.hpp"

namespace noisylmi {

// splitmix64 finalizer; used both as a mixer for seed derivation and to
// decorrelate user-provided seeds before feeding the engine.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic seed derivation for parallel substreams: folds each part into
/// the running state with splitmix64. Independent of evaluation order issues.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = 0x6a09e667f3bcc908ull;
  for (std::uint64_t p : parts) s = splitmix64(s ^ p);
  return s;
}

/// Seedable RNG with hand-rolled distributions so that streams are identical
/// across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; caches the paired deviate.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    // Guard against log(0).
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  template <typename Scalar>
  Eigen::MatrixX<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixX<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(normal());
    return m;
  }

  template <typename Scalar>
  Eigen::VectorX<Scalar> uniform_vector(Eigen::Index dim, double lo, double hi) {
    Eigen::VectorX<Scalar> v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = static_cast<Scalar>(uniform(lo, hi));
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

enum class BallMode { Interior, Surface };

/// Draw from the Euclidean ball { v : |v|^2 <= sq_bound }: uniform over the
/// ball (Interior) or over its boundary sphere (Surface).
template <typename Scalar>
Eigen::VectorX<Scalar> sample_ball(Rng& rng, Eigen::Index dim, double sq_bound, BallMode mode) {
  Eigen::VectorX<Scalar> dir = rng.normal_matrix<Scalar>(dim, 1);
  double norm = static_cast<double>(dir.norm());
  while (norm < 1e-300) {  // essentially impossible; redraw keeps determinism
    dir = rng.normal_matrix<Scalar>(dim, 1);
    norm = static_cast<double>(dir.norm());
  }
  double radius = std::sqrt(sq_bound);
  if (mode == BallMode::Interior)
    radius *= std::pow(rng.uniform01(), 1.0 / static_cast<double>(dim));
  return dir * static_cast<Scalar>(radius / norm);
}

/// Gaussian with deviation sqrt(sq_bound)/3 per component, rejected until the
/// squared norm respects the bound. Deterministic for a given engine state.
template <typename Scalar>
Eigen::VectorX<Scalar> sample_truncated_gaussian(Rng& rng, Eigen::Index dim, double sq_bound) {
  if (sq_bound <= 0.0) return Eigen::VectorX<Scalar>::Zero(dim);
  double sigma = std::sqrt(sq_bound) / 3.0;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Eigen::VectorX<Scalar> v = rng.normal_matrix<Scalar>(dim, 1) * static_cast<Scalar>(sigma);
    if (static_cast<double>(v.squaredNorm()) <= sq_bound) return v;
  }
  throw InvalidInput("truncated-gaussian sampling failed to satisfy the bound");
}

}  // namespace noisylmi
