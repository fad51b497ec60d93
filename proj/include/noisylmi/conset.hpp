#pragma once

// Data matrices and the sets of parameters consistent with measured data:
// the ellipsoidal set induced by an energy bound on the stacked errors, and
// the intersection-form set induced by a per-step instantaneous bound.

#include <Eigen/Dense>
#include <sstream>

#include "noisylmi/errors.hpp"
#include "noisylmi/linalg.hpp"
#include "noisylmi/random.hpp"
#include "noisylmi/simkit.hpp"

namespace noisylmi::conset {

/// Stacked measured data: columns of X1 are x^m(1..T), of X0 are x^m(0..T-1),
/// of U0 are u^m(0..T-1).
template <typename Scalar>
struct DataMatrices {
  Eigen::MatrixX<Scalar> X1;  // n x T
  Eigen::MatrixX<Scalar> X0;  // n x T
  Eigen::MatrixX<Scalar> U0;  // m x T

  Eigen::Index state_dim() const { return X1.rows(); }
  Eigen::Index input_dim() const { return U0.rows(); }
  Eigen::Index horizon() const { return X1.cols(); }

  void validate() const {
    if (X1.cols() != X0.cols() || X0.cols() != U0.cols())
      throw InvalidInput("data matrices: column counts differ");
    if (X1.rows() != X0.rows()) throw InvalidInput("data matrices: X1 and X0 row counts differ");
    if (X1.cols() < 1) throw InvalidInput("data matrices: at least one column required");
  }

  /// Measured regressor [X0; U0], (n+m) x T.
  Eigen::MatrixX<Scalar> regressor() const {
    Eigen::MatrixX<Scalar> w(X0.rows() + U0.rows(), X0.cols());
    w.topRows(X0.rows()) = X0;
    w.bottomRows(U0.rows()) = U0;
    return w;
  }
};

template <typename Scalar>
DataMatrices<Scalar> assemble(const simkit::MeasuredTrajectory<Scalar>& traj) {
  const Eigen::Index t = traj.horizon();
  if (t < 1) throw InvalidInput("assemble: trajectory horizon must be >= 1");
  DataMatrices<Scalar> d;
  d.X1 = traj.state_measured.rightCols(t);
  d.X0 = traj.state_measured.leftCols(t);
  d.U0 = traj.input_measured;
  return d;
}

/// PSD matrix bound on the accumulated outer product of stacked errors,
/// partitioned conformably with the stacked error [e_x+; e_x; e_u].
template <typename Scalar>
struct EnergyBound {
  Eigen::MatrixX<Scalar> Theta;  // (2n+m) x (2n+m), symmetric PSD
  Eigen::Index n = 0;
  Eigen::Index m = 0;

  void validate() const {
    const Eigen::Index dim = 2 * n + m;
    if (Theta.rows() != dim || Theta.cols() != dim)
      throw InvalidInput("energy bound: Theta must be (2n+m) square");
    const Scalar scale = Scalar(1) + Theta.cwiseAbs().maxCoeff();
    if ((Theta - Theta.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * scale)
      throw InvalidInput("energy bound: Theta must be symmetric");
    const Scalar lam_min = min_eigenvalue<Scalar>(Theta);
    const Scalar lam_max = max_eigenvalue<Scalar>(Theta);
    if (lam_min < Scalar(-1e-9) * (Scalar(1) + std::max(lam_max, Scalar(0))))
      throw InvalidInput("energy bound: Theta must be positive semidefinite");
  }

  Eigen::MatrixX<Scalar> block11() const { return Theta.topLeftCorner(n, n); }
  Eigen::MatrixX<Scalar> block12() const { return Theta.topRightCorner(n, n + m); }
  Eigen::MatrixX<Scalar> block22() const { return Theta.bottomRightCorner(n + m, n + m); }
};

/// Scalar bound on the squared norm of each stacked error vector.
template <typename Scalar>
struct InstantaneousBound {
  Scalar theta = Scalar(0);

  void validate() const {
    if (theta < Scalar(0)) throw InvalidInput("instantaneous bound: theta must be nonnegative");
  }
};

/// Conservative conversion of per-signal instantaneous bounds into an energy
/// bound: Theta = T (2 e_x_bound + e_u_bound) I.
template <typename Scalar>
EnergyBound<Scalar> inst_to_energy(Scalar e_x_bound, Scalar e_u_bound, Eigen::Index horizon,
                                   Eigen::Index n, Eigen::Index m) {
  if (e_x_bound < Scalar(0) || e_u_bound < Scalar(0))
    throw InvalidInput("inst_to_energy: bounds must be nonnegative");
  if (horizon < 1) throw InvalidInput("inst_to_energy: horizon must be >= 1");
  EnergyBound<Scalar> bound;
  bound.n = n;
  bound.m = m;
  bound.Theta = static_cast<Scalar>(horizon) * (Scalar(2) * e_x_bound + e_u_bound) *
                Eigen::MatrixX<Scalar>::Identity(2 * n + m, 2 * n + m);
  return bound;
}

/// The three coefficient matrices of the data-consistency quadratic
/// Z quad Z^T + Z cross^T + cross Z^T + offset <= 0. These exist for any
/// data/bound pair, with no signal-to-noise requirement.
template <typename Scalar>
struct ConsistencyQuadratic {
  Eigen::MatrixX<Scalar> quad;    // (n+m) x (n+m), regressor Gram minus noise block
  Eigen::MatrixX<Scalar> cross;   // n x (n+m)
  Eigen::MatrixX<Scalar> offset;  // n x n
};

template <typename Scalar>
ConsistencyQuadratic<Scalar> consistency_quadratic(const DataMatrices<Scalar>& data,
                                                   const EnergyBound<Scalar>& bound) {
  data.validate();
  bound.validate();
  if (bound.n != data.state_dim() || bound.m != data.input_dim())
    throw InvalidInput("consistency_quadratic: bound partition does not match data dimensions");
  const Eigen::MatrixX<Scalar> w = data.regressor();
  ConsistencyQuadratic<Scalar> q;
  q.quad = symmetrize<Scalar>(w * w.transpose() - bound.block22());
  q.cross = -data.X1 * w.transpose() + bound.block12();
  q.offset = symmetrize<Scalar>(data.X1 * data.X1.transpose() - bound.block11());
  return q;
}

/// Ellipsoidal set of parameters consistent with data under an energy bound:
/// { Z : (Z - center) quad (Z - center)^T <= spread }. Requires the data Gram
/// to dominate the noise block (quad positive definite).
template <typename Scalar>
struct EnergyConsistencySet {
  Eigen::MatrixX<Scalar> quad;    // ellipsoid metric, positive definite
  Eigen::MatrixX<Scalar> cross;   // linear coefficient of the consistency quadratic
  Eigen::MatrixX<Scalar> offset;  // constant coefficient of the consistency quadratic
  Eigen::MatrixX<Scalar> center;          // n x (n+m)
  Eigen::MatrixX<Scalar> spread;          // n x n, PSD
  Eigen::MatrixX<Scalar> spread_sqrt;     // PSD square root of spread
  Eigen::MatrixX<Scalar> quad_inv_sqrt;   // inverse PSD square root of quad
  Eigen::Index n = 0;
  Eigen::Index m = 0;

  Eigen::Index param_cols() const { return n + m; }
};

template <typename Scalar>
EnergyConsistencySet<Scalar> build_energy_set(const DataMatrices<Scalar>& data,
                                              const EnergyBound<Scalar>& bound,
                                              Scalar tol = Scalar(1e-9)) {
  ConsistencyQuadratic<Scalar> q = consistency_quadratic<Scalar>(data, bound);

  const Scalar gram_scale = Scalar(1) + std::max(max_eigenvalue<Scalar>(q.quad), Scalar(0));
  const Scalar lam_min = min_eigenvalue<Scalar>(q.quad);
  if (!(lam_min > tol * gram_scale)) {
    std::ostringstream msg;
    msg << "signal-to-noise assumption failed: data Gram minus noise block has lambda_min=" << lam_min;
    throw AssumptionViolation(msg.str(), static_cast<double>(lam_min));
  }

  EnergyConsistencySet<Scalar> set;
  set.n = data.state_dim();
  set.m = data.input_dim();
  set.quad = q.quad;
  set.cross = q.cross;
  set.offset = q.offset;

  Eigen::LLT<Eigen::MatrixX<Scalar>> llt(q.quad);
  if (llt.info() != Eigen::Success)
    throw NumericalRankError("build_energy_set: Cholesky of the ellipsoid metric failed");
  // center = -cross quad^{-1}; solve on the transpose to avoid the inverse.
  set.center = -llt.solve(q.cross.transpose()).transpose();
  Eigen::MatrixX<Scalar> spread =
      symmetrize<Scalar>(q.cross * llt.solve(q.cross.transpose()) - q.offset);

  const Scalar spread_scale = Scalar(1) + std::max(max_eigenvalue<Scalar>(spread), Scalar(0));
  const Scalar spread_min = min_eigenvalue<Scalar>(spread);
  if (spread_min < -tol * spread_scale) {
    std::ostringstream msg;
    msg << "build_energy_set: consistency set is empty (spread has lambda_min=" << spread_min
        << "); the postulated bound cannot explain the data";
    throw InvalidInput(msg.str());
  }
  // Clip the at-most-tolerance-level negative eigenvalues.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> es(spread);
  set.spread = es.eigenvectors() * es.eigenvalues().cwiseMax(Scalar(0)).asDiagonal() *
               es.eigenvectors().transpose();
  set.spread_sqrt = es.eigenvectors() * es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal() *
                    es.eigenvectors().transpose();
  set.quad_inv_sqrt = psd_inv_sqrt<Scalar>(q.quad);
  return set;
}

/// Membership in the energy-bound set, ellipsoid form:
/// lambda_min(spread - (Z - center) quad (Z - center)^T) >= -tol (1 + lambda_max(spread)).
template <typename Scalar>
bool membership_energy(const EnergyConsistencySet<Scalar>& set, const Eigen::MatrixX<Scalar>& params,
                       Scalar tol = Scalar(1e-8)) {
  if (params.rows() != set.n || params.cols() != set.param_cols())
    throw InvalidInput("membership_energy: parameter dimension mismatch");
  const Eigen::MatrixX<Scalar> delta = params - set.center;
  const Eigen::MatrixX<Scalar> gap = set.spread - delta * set.quad * delta.transpose();
  const Scalar scale = Scalar(1) + std::max(max_eigenvalue<Scalar>(set.spread), Scalar(0));
  return min_eigenvalue<Scalar>(gap) >= -tol * scale;
}

enum class SampleMode { Interior, Boundary };

/// The unit-ball parameterization of the set: a contraction C with
/// spectral norm at most one maps to the member
/// center + spread_sqrt * C * quad_inv_sqrt.
template <typename Scalar>
Eigen::MatrixX<Scalar> member_from_contraction(const EnergyConsistencySet<Scalar>& set,
                                               const Eigen::MatrixX<Scalar>& contraction) {
  if (contraction.rows() != set.n || contraction.cols() != set.param_cols())
    throw InvalidInput("member_from_contraction: contraction dimension mismatch");
  return set.center + set.spread_sqrt * contraction * set.quad_inv_sqrt;
}

/// Draw a member through a random contraction; boundary mode rescales it to
/// unit spectral norm.
template <typename Scalar>
Eigen::MatrixX<Scalar> sample_energy(const EnergyConsistencySet<Scalar>& set, SampleMode mode,
                                     Rng& rng) {
  Eigen::MatrixX<Scalar> gamma = rng.normal_matrix<Scalar>(set.n, set.param_cols());
  Eigen::JacobiSVD<Eigen::MatrixX<Scalar>> svd(gamma);
  Scalar smax = svd.singularValues().maxCoeff();
  if (smax < Scalar(1e-300)) smax = Scalar(1);
  Scalar radius = (mode == SampleMode::Boundary) ? Scalar(1) : static_cast<Scalar>(rng.uniform01());
  return member_from_contraction<Scalar>(set, Eigen::MatrixX<Scalar>(gamma * (radius / smax)));
}

template <typename Scalar>
Eigen::MatrixX<Scalar> sample_energy(const EnergyConsistencySet<Scalar>& set, SampleMode mode,
                                     std::uint64_t seed) {
  Rng rng(seed);
  return sample_energy<Scalar>(set, mode, rng);
}

/// Membership in the instantaneous-bound set: for every step k the residual
/// r(k) = x^m(k+1) - [A B] [x^m(k); u^m(k)] must satisfy
/// r r^T <= theta (I + A A^T + B B^T) + tol I.
template <typename Scalar>
bool membership_inst(const DataMatrices<Scalar>& data, const InstantaneousBound<Scalar>& bound,
                     const Eigen::MatrixX<Scalar>& params, Scalar tol = Scalar(1e-8)) {
  data.validate();
  bound.validate();
  const Eigen::Index n = data.state_dim();
  const Eigen::Index m = data.input_dim();
  if (params.rows() != n || params.cols() != n + m)
    throw InvalidInput("membership_inst: parameter dimension mismatch");
  const auto a = params.leftCols(n);
  const auto b = params.rightCols(m);
  const Eigen::MatrixX<Scalar> envelope =
      bound.theta * (Eigen::MatrixX<Scalar>::Identity(n, n) + a * a.transpose() + b * b.transpose());
  const Eigen::MatrixX<Scalar> residuals = data.X1 - params * data.regressor();
  for (Eigen::Index k = 0; k < data.horizon(); ++k) {
    const Eigen::VectorX<Scalar> r = residuals.col(k);
    // r r^T - envelope has at most one positive eigenvalue; an explicit
    // eigensolve keeps the check faithful to the matrix inequality.
    const Scalar worst = max_eigenvalue<Scalar>(Eigen::MatrixX<Scalar>(r * r.transpose() - envelope));
    if (worst > tol) return false;
  }
  return true;
}

}  // namespace noisylmi::conset
