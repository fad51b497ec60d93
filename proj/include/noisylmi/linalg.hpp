#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "noisylmi/errors.hpp"

namespace noisylmi {

template <typename Scalar>
Eigen::MatrixX<Scalar> symmetrize(const Eigen::MatrixX<Scalar>& m) {
  return ((m + m.transpose()) / Scalar(2)).eval();
}

template <typename Scalar>
Eigen::VectorX<Scalar> symmetric_eigenvalues(const Eigen::MatrixX<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

template <typename Scalar>
Scalar min_eigenvalue(const Eigen::MatrixX<Scalar>& m) {
  return symmetric_eigenvalues(m).minCoeff();
}

template <typename Scalar>
Scalar max_eigenvalue(const Eigen::MatrixX<Scalar>& m) {
  return symmetric_eigenvalues(m).maxCoeff();
}

/// Largest |eigenvalue| of a square (not necessarily symmetric) matrix.
template <typename Scalar>
Scalar spectral_radius(const Eigen::MatrixX<Scalar>& m) {
  if (m.rows() != m.cols()) throw InvalidInput("spectral_radius: matrix must be square");
  if (m.rows() == 0) return Scalar(0);
  Eigen::EigenSolver<Eigen::MatrixX<Scalar>> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Unique PSD square root; eigenvalues below zero are clipped so slightly
/// indefinite inputs (machine-precision noise) still yield a PSD root.
template <typename Scalar>
Eigen::MatrixX<Scalar> psd_sqrt(const Eigen::MatrixX<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> es(symmetrize(m));
  Eigen::VectorX<Scalar> lam = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Inverse PSD square root of a positive definite matrix.
template <typename Scalar>
Eigen::MatrixX<Scalar> psd_inv_sqrt(const Eigen::MatrixX<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> es(symmetrize(m));
  Scalar lam_min = es.eigenvalues().minCoeff();
  Scalar lam_max = es.eigenvalues().maxCoeff();
  if (!(lam_min > Scalar(0)) || lam_min <= std::numeric_limits<Scalar>::epsilon() * lam_max * Scalar(100))
    throw NumericalRankError("psd_inv_sqrt: matrix is not positive definite");
  Eigen::VectorX<Scalar> lam = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Rank of [B, AB, ..., A^{n-1}B] via column-pivoted QR.
template <typename Scalar>
Eigen::Index controllability_rank(const Eigen::MatrixX<Scalar>& a, const Eigen::MatrixX<Scalar>& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw InvalidInput("controllability_rank: inconsistent dimensions");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  Eigen::MatrixX<Scalar> ctrb(n, n * m);
  ctrb.leftCols(m) = b;
  for (Eigen::Index i = 1; i < n; ++i)
    ctrb.middleCols(i * m, m) = a * ctrb.middleCols((i - 1) * m, m);
  Eigen::ColPivHouseholderQR<Eigen::MatrixX<Scalar>> qr(ctrb);
  return qr.rank();
}

}  // namespace noisylmi
