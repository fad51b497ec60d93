#pragma once

// Ground-truth LTI plants, the bounded-measurement-error data-collection
// experiment, and closed-loop evaluation helpers. Simulation keeps the hidden
// true signals and error sequences alongside the measured ones so tests and
// diagnostics can recompute everything the set constructions consume.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "noisylmi/errors.hpp"
#include "noisylmi/linalg.hpp"
#include "noisylmi/random.hpp"

namespace noisylmi::simkit {

template <typename Scalar>
struct PlantModel {
  Eigen::MatrixX<Scalar> A;  // n x n
  Eigen::MatrixX<Scalar> B;  // n x m

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }

  void validate() const {
    if (A.rows() != A.cols()) throw InvalidInput("plant: A must be square");
    if (B.rows() != A.rows()) throw InvalidInput("plant: B row count must match A");
  }

  Eigen::Index controllability_rank() const { return noisylmi::controllability_rank<Scalar>(A, B); }
};

enum class NoiseDistribution { UniformBall, UniformSphere, TruncatedGaussian };

inline NoiseDistribution noise_distribution_from_string(const std::string& s) {
  if (s == "uniform-ball") return NoiseDistribution::UniformBall;
  if (s == "uniform-sphere") return NoiseDistribution::UniformSphere;
  if (s == "truncated-gaussian") return NoiseDistribution::TruncatedGaussian;
  throw InvalidInput("unknown noise distribution: " + s);
}

inline std::string to_string(NoiseDistribution d) {
  switch (d) {
    case NoiseDistribution::UniformBall: return "uniform-ball";
    case NoiseDistribution::UniformSphere: return "uniform-sphere";
    case NoiseDistribution::TruncatedGaussian: return "truncated-gaussian";
  }
  return "uniform-ball";
}

/// Per-signal squared-norm bounds: every drawn state error e_x satisfies
/// |e_x|^2 <= state_sq_bound, every input error |e_u|^2 <= input_sq_bound.
struct NoiseModel {
  double state_sq_bound = 0.0;
  double input_sq_bound = 0.0;
  NoiseDistribution distribution = NoiseDistribution::UniformBall;

  void validate() const {
    if (state_sq_bound < 0.0 || input_sq_bound < 0.0)
      throw InvalidInput("noise bounds must be nonnegative");
  }

  /// Squared-norm bound on the stacked error [e_x(k+1); e_x(k); e_u(k)].
  double stacked_sq_bound() const { return 2.0 * state_sq_bound + input_sq_bound; }
};

template <typename Scalar>
Eigen::VectorX<Scalar> draw_error(Rng& rng, Eigen::Index dim, double sq_bound, NoiseDistribution d) {
  if (sq_bound <= 0.0) return Eigen::VectorX<Scalar>::Zero(dim);
  switch (d) {
    case NoiseDistribution::UniformBall: return sample_ball<Scalar>(rng, dim, sq_bound, BallMode::Interior);
    case NoiseDistribution::UniformSphere: return sample_ball<Scalar>(rng, dim, sq_bound, BallMode::Surface);
    case NoiseDistribution::TruncatedGaussian: return sample_truncated_gaussian<Scalar>(rng, dim, sq_bound);
  }
  return Eigen::VectorX<Scalar>::Zero(dim);
}

/// Measured input/state sequences; the hidden true signals and error draws
/// are retained when produced by simulation.
template <typename Scalar>
struct MeasuredTrajectory {
  Eigen::MatrixX<Scalar> input_measured;  // m x T, columns u^m(0..T-1)
  Eigen::MatrixX<Scalar> state_measured;  // n x (T+1), columns x^m(0..T)

  bool has_hidden = false;
  Eigen::MatrixX<Scalar> input_true;   // m x T
  Eigen::MatrixX<Scalar> state_true;   // n x (T+1)
  Eigen::MatrixX<Scalar> input_error;  // m x T
  Eigen::MatrixX<Scalar> state_error;  // n x (T+1)

  Eigen::Index horizon() const { return input_measured.cols(); }
  Eigen::Index state_dim() const { return state_measured.rows(); }
  Eigen::Index input_dim() const { return input_measured.rows(); }

  /// Stacked error [e_x(k+1); e_x(k); e_u(k)] for step k (simulation mode only).
  Eigen::VectorX<Scalar> stacked_error(Eigen::Index k) const {
    if (!has_hidden) throw InvalidInput("stacked_error: hidden signals unavailable");
    const Eigen::Index n = state_dim();
    const Eigen::Index m = input_dim();
    Eigen::VectorX<Scalar> eps(2 * n + m);
    eps.head(n) = state_error.col(k + 1);
    eps.segment(n, n) = state_error.col(k);
    eps.tail(m) = input_error.col(k);
    return eps;
  }

  /// All stacked errors as a (2n+m) x T matrix (simulation mode only).
  Eigen::MatrixX<Scalar> stacked_error_matrix() const {
    const Eigen::Index t = horizon();
    Eigen::MatrixX<Scalar> e(2 * state_dim() + input_dim(), t);
    for (Eigen::Index k = 0; k < t; ++k) e.col(k) = stacked_error(k);
    return e;
  }

  /// True stacked regressor [x(0..T-1); u(0..T-1)] (simulation mode only).
  Eigen::MatrixX<Scalar> true_regressor() const {
    if (!has_hidden) throw InvalidInput("true_regressor: hidden signals unavailable");
    const Eigen::Index t = horizon();
    Eigen::MatrixX<Scalar> s(state_dim() + input_dim(), t);
    s.topRows(state_dim()) = state_true.leftCols(t);
    s.bottomRows(input_dim()) = input_true;
    return s;
  }
};

/// Runs the data-collection protocol: at each step the commanded input is
/// drawn uniform componentwise in [-amplitude, amplitude] and applied; the
/// plant sees the commanded value minus the input error, and the measured
/// state is the true state plus the state error. Deterministic given seed.
template <typename Scalar>
MeasuredTrajectory<Scalar> simulate_experiment(const PlantModel<Scalar>& plant,
                                               const Eigen::VectorX<Scalar>& x0,
                                               double input_amplitude, Eigen::Index horizon,
                                               const NoiseModel& noise, std::uint64_t seed) {
  plant.validate();
  noise.validate();
  if (horizon < 1) throw InvalidInput("simulate_experiment: horizon must be >= 1");
  if (!(input_amplitude > 0.0)) throw InvalidInput("simulate_experiment: input amplitude must be positive");
  const Eigen::Index n = plant.state_dim();
  const Eigen::Index m = plant.input_dim();
  if (x0.size() != n) throw InvalidInput("simulate_experiment: x0 dimension mismatch");

  Rng rng(seed);
  MeasuredTrajectory<Scalar> traj;
  traj.has_hidden = true;
  traj.input_measured.resize(m, horizon);
  traj.input_true.resize(m, horizon);
  traj.input_error.resize(m, horizon);
  traj.state_measured.resize(n, horizon + 1);
  traj.state_true.resize(n, horizon + 1);
  traj.state_error.resize(n, horizon + 1);

  traj.state_true.col(0) = x0;
  traj.state_error.col(0) = draw_error<Scalar>(rng, n, noise.state_sq_bound, noise.distribution);
  traj.state_measured.col(0) = traj.state_true.col(0) + traj.state_error.col(0);

  for (Eigen::Index k = 0; k < horizon; ++k) {
    traj.input_measured.col(k) = rng.uniform_vector<Scalar>(m, -input_amplitude, input_amplitude);
    traj.input_error.col(k) = draw_error<Scalar>(rng, m, noise.input_sq_bound, noise.distribution);
    traj.input_true.col(k) = traj.input_measured.col(k) - traj.input_error.col(k);

    traj.state_true.col(k + 1) = plant.A * traj.state_true.col(k) + plant.B * traj.input_true.col(k);
    if (traj.state_true.col(k + 1).norm() > Scalar(1e12))
      throw UnstableExperiment("simulate_experiment: state exceeded overflow guard at step " +
                               std::to_string(k + 1));
    traj.state_error.col(k + 1) = draw_error<Scalar>(rng, n, noise.state_sq_bound, noise.distribution);
    traj.state_measured.col(k + 1) = traj.state_true.col(k + 1) + traj.state_error.col(k + 1);
  }
  return traj;
}

/// Signal-to-noise check on the true data: the ratio
/// sigma_min(S0 S0^T) / sigma_max(Theta22) and whether it exceeds 4,
/// which is sufficient for the data-Gram domination assumption.
template <typename Scalar>
std::pair<Scalar, bool> snr_sufficient(const MeasuredTrajectory<Scalar>& traj,
                                       const Eigen::MatrixX<Scalar>& theta22) {
  const Eigen::MatrixX<Scalar> s0 = traj.true_regressor();
  if (theta22.rows() != s0.rows() || theta22.cols() != s0.rows())
    throw InvalidInput("snr_sufficient: Theta22 dimension mismatch");
  const Eigen::MatrixX<Scalar> gram = s0 * s0.transpose();
  Eigen::JacobiSVD<Eigen::MatrixX<Scalar>> svd_gram(gram);
  const Scalar smin = svd_gram.singularValues().minCoeff();
  Eigen::JacobiSVD<Eigen::MatrixX<Scalar>> svd_theta(theta22);
  const Scalar smax = svd_theta.singularValues().size() ? svd_theta.singularValues().maxCoeff() : Scalar(0);
  if (smax == Scalar(0))
    return {std::numeric_limits<Scalar>::infinity(), true};
  const Scalar ratio = smin / smax;
  return {ratio, ratio > Scalar(4)};
}

/// Iterates x+ = (A + B K) x from x0 for `steps` steps; returns n x (steps+1).
template <typename Scalar>
Eigen::MatrixX<Scalar> simulate_closed_loop(const PlantModel<Scalar>& plant,
                                            const Eigen::MatrixX<Scalar>& gain,
                                            const Eigen::VectorX<Scalar>& x0, Eigen::Index steps) {
  plant.validate();
  if (gain.rows() != plant.input_dim() || gain.cols() != plant.state_dim())
    throw InvalidInput("simulate_closed_loop: gain dimension mismatch");
  if (x0.size() != plant.state_dim()) throw InvalidInput("simulate_closed_loop: x0 dimension mismatch");
  const Eigen::MatrixX<Scalar> closed = plant.A + plant.B * gain;
  Eigen::MatrixX<Scalar> states(plant.state_dim(), steps + 1);
  states.col(0) = x0;
  for (Eigen::Index k = 0; k < steps; ++k) states.col(k + 1) = closed * states.col(k);
  return states;
}

/// Random plant with entries scaled so the open-loop spectral radius matches
/// the target; B entries are standard normal.
template <typename Scalar>
PlantModel<Scalar> random_plant(Eigen::Index n, Eigen::Index m, double spectral_radius_target,
                                std::uint64_t seed) {
  if (n < 1 || m < 1) throw InvalidInput("random_plant: dimensions must be positive");
  Rng rng(derive_seed({seed, 0x706c616e74ull}));
  Eigen::MatrixX<Scalar> a = rng.normal_matrix<Scalar>(n, n) / std::sqrt(static_cast<Scalar>(n));
  const Scalar rho = spectral_radius<Scalar>(a);
  if (rho > Scalar(1e-12)) a *= static_cast<Scalar>(spectral_radius_target) / rho;
  Eigen::MatrixX<Scalar> b = rng.normal_matrix<Scalar>(n, m);
  return {a, b};
}

/// Plant whose open-loop spectrum equals the given (real) eigenvalue list:
/// A = S diag(eigs) S^{-1} with a seeded, condition-capped random similarity.
template <typename Scalar>
PlantModel<Scalar> plant_with_eigenvalues(const Eigen::VectorX<Scalar>& eigenvalues, Eigen::Index m,
                                          std::uint64_t seed) {
  const Eigen::Index n = eigenvalues.size();
  if (n < 1 || m < 1) throw InvalidInput("plant_with_eigenvalues: dimensions must be positive");
  Rng rng(derive_seed({seed, 0x6569677376616cull}));
  Eigen::MatrixX<Scalar> similarity;
  for (int attempt = 0; attempt < 100; ++attempt) {
    similarity = rng.normal_matrix<Scalar>(n, n);
    Eigen::JacobiSVD<Eigen::MatrixX<Scalar>> svd(similarity);
    const Scalar smin = svd.singularValues().minCoeff();
    if (smin > Scalar(0) && svd.singularValues().maxCoeff() / smin < Scalar(50)) break;
    similarity.resize(0, 0);
  }
  if (similarity.size() == 0)
    throw NumericalRankError("plant_with_eigenvalues: no well-conditioned similarity found");
  Eigen::MatrixX<Scalar> a = similarity * eigenvalues.asDiagonal() *
                             similarity.partialPivLu().solve(Eigen::MatrixX<Scalar>::Identity(n, n));
  Eigen::MatrixX<Scalar> b = rng.normal_matrix<Scalar>(n, m);
  return {a, b};
}

}  // namespace noisylmi::simkit
