#pragma once

// Constructive matrix elimination: decide E E^T <= F G F^T (PSD order) and,
// when it holds, produce D with E = F D and D D^T <= G. The construction runs
// the existence proof as a numerical algorithm: eigendecompose G, row-reduce
// F restricted to the range of G, and assemble D from a structured right
// inverse of the reduced block.

#include <Eigen/Dense>
#include <sstream>
#include <utility>

#include "noisylmi/errors.hpp"
#include "noisylmi/linalg.hpp"

namespace noisylmi::matfact {

template <typename Scalar>
struct InclusionInstance {
  Eigen::MatrixX<Scalar> E;  // n1 x n2
  Eigen::MatrixX<Scalar> F;  // n1 x n3
  Eigen::MatrixX<Scalar> G;  // n3 x n3, symmetric PSD

  void validate() const {
    if (E.rows() != F.rows()) throw InvalidInput("inclusion instance: E and F row counts differ");
    if (F.cols() != G.rows() || G.rows() != G.cols())
      throw InvalidInput("inclusion instance: G must be square with F's column count");
    const Scalar scale = Scalar(1) + G.cwiseAbs().maxCoeff();
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * scale)
      throw InvalidInput("inclusion instance: G is not symmetric within tolerance");
    const Scalar lam_max = max_eigenvalue<Scalar>(G);
    const Scalar lam_min = min_eigenvalue<Scalar>(G);
    if (lam_min < Scalar(-1e-9) * (Scalar(1) + std::max(lam_max, Scalar(0))))
      throw InvalidInput("inclusion instance: G is not positive semidefinite within tolerance");
  }
};

/// Row reduction to reduced row echelon form with partial pivoting.
/// Returns (V, rank) with V nonsingular and V*M = [top; ~0], top = first
/// `rank` rows, full row rank. Pivot threshold is relative to column scale.
template <typename Scalar>
std::pair<Eigen::MatrixX<Scalar>, Eigen::Index> row_reduce(const Eigen::MatrixX<Scalar>& m,
                                                           Scalar pivot_tol = Scalar(1e-12)) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  Eigen::MatrixX<Scalar> work = m;
  Eigen::MatrixX<Scalar> v = Eigen::MatrixX<Scalar>::Identity(rows, rows);
  Eigen::Index pivot_row = 0;
  for (Eigen::Index col = 0; col < cols && pivot_row < rows; ++col) {
    const Scalar column_scale = m.col(col).cwiseAbs().maxCoeff();
    Eigen::Index best = pivot_row;
    Scalar best_abs = std::abs(work(pivot_row, col));
    for (Eigen::Index i = pivot_row + 1; i < rows; ++i) {
      if (std::abs(work(i, col)) > best_abs) {
        best = i;
        best_abs = std::abs(work(i, col));
      }
    }
    if (best_abs <= pivot_tol * column_scale) continue;  // no pivot in this column
    work.row(pivot_row).swap(work.row(best));
    v.row(pivot_row).swap(v.row(best));
    const Scalar piv = work(pivot_row, col);
    work.row(pivot_row) /= piv;
    v.row(pivot_row) /= piv;
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (i == pivot_row) continue;
      const Scalar f = work(i, col);
      if (f != Scalar(0)) {
        work.row(i) -= f * work.row(pivot_row);
        v.row(i) -= f * v.row(pivot_row);
      }
    }
    ++pivot_row;
  }
  return {std::move(v), pivot_row};
}

template <typename Scalar>
struct FactorResult {
  Eigen::MatrixX<Scalar> D;  // n3 x n2, satisfies E = F D and D D^T <= G
  Eigen::Index rank_G = 0;

  struct Diagnostics {
    Scalar factor_residual = Scalar(0);   // ||F D - E||
    Scalar inclusion_gap = Scalar(0);     // lambda_max(D D^T - G)
  } diagnostics;

  // Intermediate state of the construction, kept for inspection.
  struct Internals {
    Eigen::MatrixX<Scalar> range_basis;       // orthonormal basis of the kept eigenspace of G
    Eigen::VectorX<Scalar> kept_eigenvalues;  // matching positive eigenvalues
    Eigen::MatrixX<Scalar> row_ops;           // nonsingular V from the row reduction
    Eigen::MatrixX<Scalar> reduced_top;       // full-row-rank top block of V*F*range_basis
    Eigen::MatrixX<Scalar> reduced_rhs_top;   // matching top block of V*E
    Eigen::MatrixX<Scalar> reduced_rhs_rest;  // remaining rows of V*E (must vanish)
    Eigen::MatrixX<Scalar> right_inverse;     // weighted right inverse of reduced_top
    Eigen::MatrixX<Scalar> core_factor;       // factor in range coordinates
  } internals;
};

/// True iff lambda_min(F G F^T - E E^T) >= -tol * (1 + lambda_max(F G F^T)).
template <typename Scalar>
bool check_inclusion(const InclusionInstance<Scalar>& inst, Scalar tol = Scalar(1e-9)) {
  inst.validate();
  if (!(tol > Scalar(0))) throw InvalidInput("check_inclusion: tol must be positive");
  const Eigen::MatrixX<Scalar> fgf = symmetrize<Scalar>(inst.F * inst.G * inst.F.transpose());
  const Eigen::MatrixX<Scalar> gap = fgf - inst.E * inst.E.transpose();
  const Scalar lam_max = std::max(max_eigenvalue<Scalar>(fgf), Scalar(0));
  return min_eigenvalue<Scalar>(gap) >= -tol * (Scalar(1) + lam_max);
}

/// Constructive half of the elimination result. Requires the inclusion to
/// hold; throws InclusionViolation otherwise, with the offending residual.
template <typename Scalar>
FactorResult<Scalar> construct_factor(const InclusionInstance<Scalar>& inst,
                                      Scalar rank_tol = Scalar(1e-10),
                                      Scalar incl_tol = Scalar(1e-8)) {
  inst.validate();
  const Eigen::Index n2 = inst.E.cols();
  const Eigen::Index n3 = inst.G.rows();

  FactorResult<Scalar> out;
  out.D = Eigen::MatrixX<Scalar>::Zero(n3, n2);

  const Scalar e_scale = Scalar(1) + inst.E.norm();

  // Eigendecompose G and keep the numerically positive eigenspace.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> es(symmetrize<Scalar>(inst.G));
  const Scalar lam_max = es.eigenvalues().size() ? es.eigenvalues().maxCoeff() : Scalar(0);
  const Scalar cut = rank_tol * std::max(lam_max, Scalar(0));
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > cut) ++rank;
  out.rank_G = rank;

  if (rank == 0) {
    // G ~ 0 forces E ~ 0; D = 0 is the factor.
    if (inst.E.norm() > incl_tol * e_scale)
      throw InclusionViolation("construct_factor: G vanishes but E does not", static_cast<double>(inst.E.norm()));
    out.diagnostics.factor_residual = inst.E.norm();
    out.diagnostics.inclusion_gap = std::max(-min_eigenvalue<Scalar>(inst.G), Scalar(0));
    return out;
  }

  // Eigenvalues ascend, so the kept ones sit in the trailing columns.
  Eigen::MatrixX<Scalar> basis = es.eigenvectors().rightCols(rank);
  Eigen::VectorX<Scalar> lam = es.eigenvalues().tail(rank);
  out.internals.range_basis = basis;
  out.internals.kept_eigenvalues = lam;

  const Eigen::MatrixX<Scalar> f_range = inst.F * basis;  // n1 x rank
  if (f_range.cwiseAbs().maxCoeff() <= Scalar(1e-14) * (Scalar(1) + inst.F.cwiseAbs().maxCoeff())) {
    // F annihilates the range of G; the inclusion then forces E = 0.
    if (inst.E.norm() > incl_tol * e_scale)
      throw InclusionViolation("construct_factor: F U1 = 0 but E does not vanish",
                               static_cast<double>(inst.E.norm()));
    out.diagnostics.factor_residual = inst.E.norm();
    return out;
  }

  auto [v, reduced_rank] = row_reduce<Scalar>(f_range);
  if (reduced_rank == 0)
    throw NumericalRankError("construct_factor: row reduction found no pivots in a nonzero block");
  const Eigen::MatrixX<Scalar> vf = v * f_range;
  const Eigen::MatrixX<Scalar> ve = v * inst.E;
  const Eigen::MatrixX<Scalar> top = vf.topRows(reduced_rank);
  const Eigen::MatrixX<Scalar> rhs_top = ve.topRows(reduced_rank);
  const Eigen::MatrixX<Scalar> rhs_rest = ve.bottomRows(ve.rows() - reduced_rank);
  out.internals.row_ops = v;
  out.internals.reduced_top = top;
  out.internals.reduced_rhs_top = rhs_top;
  out.internals.reduced_rhs_rest = rhs_rest;

  // Rows of V*E outside the reduced range must vanish for E = F D to be solvable.
  const Scalar rest_scale = Scalar(1) + v.norm() * inst.E.norm();
  if (rhs_rest.size() > 0 && rhs_rest.norm() > incl_tol * rest_scale)
    throw InclusionViolation("construct_factor: inclusion violated, E has a component outside range(F G)",
                             static_cast<double>(rhs_rest.norm()));

  // Weighted right inverse top^R = Lam top^T (top Lam top^T)^{-1}.
  const Eigen::MatrixX<Scalar> weighted = top * lam.asDiagonal() * top.transpose();
  Eigen::LDLT<Eigen::MatrixX<Scalar>> ldlt(symmetrize<Scalar>(weighted));
  const Scalar w_min = min_eigenvalue<Scalar>(weighted);
  const Scalar w_max = max_eigenvalue<Scalar>(weighted);
  if (ldlt.info() != Eigen::Success || !(w_min > Scalar(0)) ||
      w_min <= std::numeric_limits<Scalar>::epsilon() * Scalar(100) * w_max) {
    std::ostringstream msg;
    msg << "construct_factor: reduced weighted Gram is singular (lambda_min=" << w_min << ")";
    throw NumericalRankError(msg.str());
  }
  const Eigen::MatrixX<Scalar> right_inv =
      lam.asDiagonal() * top.transpose() * ldlt.solve(Eigen::MatrixX<Scalar>::Identity(reduced_rank, reduced_rank));
  out.internals.right_inverse = right_inv;

  // The reduced inclusion must hold as well.
  const Scalar incl_gap = min_eigenvalue<Scalar>(
      Eigen::MatrixX<Scalar>(weighted - rhs_top * rhs_top.transpose()));
  if (incl_gap < -incl_tol * (Scalar(1) + std::max(w_max, Scalar(0))))
    throw InclusionViolation("construct_factor: inclusion violated in the reduced block",
                             static_cast<double>(-incl_gap));

  const Eigen::MatrixX<Scalar> core = right_inv * rhs_top;
  out.internals.core_factor = core;
  out.D = basis * core;
  out.diagnostics.factor_residual = (inst.F * out.D - inst.E).norm();
  out.diagnostics.inclusion_gap = max_eigenvalue<Scalar>(
      Eigen::MatrixX<Scalar>(out.D * out.D.transpose() - inst.G));
  return out;
}

}  // namespace noisylmi::matfact
