#pragma once

// Abstract linear-matrix-inequality feasibility problems and a dense
// log-barrier interior-point backend. A problem is a set of symmetric blocks,
// affine in declared matrix/scalar variables, each constrained negative or
// positive semidefinite (strict senses are closed with a scaled margin).
// Feasibility is decided through the spectral phase-I program
//     minimize t  s.t.  S_c(x) <= t I for every block c, |x| boxed,
// followed by an independent eigenvalue replay of any feasible assignment.

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "noisylmi/errors.hpp"
#include "noisylmi/linalg.hpp"
#include "noisylmi/random.hpp"

namespace noisylmi::sdp {

enum class VarKind { SymmetricMatrix, Matrix, Scalar };
enum class Sense { NegativeSemidefinite, PositiveSemidefinite };
enum class SolveStatus { Feasible, Infeasible, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NumericalFailure: return "numerical-failure";
  }
  return "numerical-failure";
}

struct VariableInfo {
  std::string name;
  VarKind kind = VarKind::Scalar;
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  double lower = -std::numeric_limits<double>::infinity();  // scalars only
  Eigen::Index offset = 0;  // first scalar coordinate
  Eigen::Index size = 1;    // number of scalar coordinates
};

using VarId = int;

template <typename Scalar>
class LmiProblem;

/// One affine symmetric block under construction. Placements address the
/// upper triangle of the block; strictly-upper placements are mirrored so the
/// block stays symmetric, diagonal placements must already be symmetric.
template <typename Scalar>
struct ConstraintBlock {
  std::string label;
  Eigen::Index dim = 0;
  Sense sense = Sense::NegativeSemidefinite;
  bool strict = false;
  Eigen::MatrixX<Scalar> constant;
  std::map<Eigen::Index, Eigen::MatrixX<Scalar>> coeffs;  // scalar coordinate -> coefficient

  ConstraintBlock(std::string lbl, Eigen::Index d, Sense s, bool strict_flag)
      : label(std::move(lbl)), dim(d), sense(s), strict(strict_flag),
        constant(Eigen::MatrixX<Scalar>::Zero(d, d)) {}

  Eigen::MatrixX<Scalar>& coeff(Eigen::Index coord) {
    auto it = coeffs.find(coord);
    if (it == coeffs.end())
      it = coeffs.emplace(coord, Eigen::MatrixX<Scalar>::Zero(dim, dim)).first;
    return it->second;
  }

  void add_constant(Eigen::Index r0, Eigen::Index c0, const Eigen::MatrixX<Scalar>& m) {
    stamp_matrix(constant, r0, c0, m);
  }

  /// Place `scale * V` (or its transpose) with the variable's scalar
  /// coordinates expanded into per-coordinate coefficient matrices.
  void add_variable(const LmiProblem<Scalar>& problem, Eigen::Index r0, Eigen::Index c0, VarId var,
                    Scalar scale = Scalar(1), bool transposed = false);

  /// Coefficient of a scalar variable spanning the whole block.
  void add_scalar_matrix(const LmiProblem<Scalar>& problem, VarId var,
                         const Eigen::MatrixX<Scalar>& m);

  /// Place `scale * left * V * right`. Diagonal placements must be congruences
  /// (right = left^T) of symmetric variables so the block stays symmetric.
  void add_transformed(const LmiProblem<Scalar>& problem, Eigen::Index r0, Eigen::Index c0,
                       VarId var, const Eigen::MatrixX<Scalar>& left,
                       const Eigen::MatrixX<Scalar>& right, Scalar scale = Scalar(1));

 private:
  void check_placement(Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols) const {
    if (r0 < 0 || c0 < r0) throw InvalidInput("constraint block: placements must address the upper triangle");
    if (r0 + rows > dim || c0 + cols > dim) throw InvalidInput("constraint block: placement exceeds block");
    if (c0 != r0 && c0 < r0 + rows)
      throw InvalidInput("constraint block: off-diagonal placement overlaps its mirror");
  }

  void stamp_matrix(Eigen::MatrixX<Scalar>& target, Eigen::Index r0, Eigen::Index c0,
                    const Eigen::MatrixX<Scalar>& m) {
    check_placement(r0, c0, m.rows(), m.cols());
    if (r0 == c0) {
      if (m.rows() != m.cols() ||
          (m - m.transpose()).cwiseAbs().maxCoeff() >
              Scalar(1e-12) * (Scalar(1) + m.cwiseAbs().maxCoeff()))
        throw InvalidInput("constraint block: diagonal placement must be symmetric");
      target.block(r0, c0, m.rows(), m.cols()) += symmetrize<Scalar>(m);
    } else {
      target.block(r0, c0, m.rows(), m.cols()) += m;
      target.block(c0, r0, m.cols(), m.rows()) += m.transpose();
    }
  }

  void stamp_entry(Eigen::MatrixX<Scalar>& target, Eigen::Index r, Eigen::Index c, Scalar v,
                   bool on_diagonal_block) {
    target(r, c) += v;
    if (!on_diagonal_block) target(c, r) += v;
  }

  friend class LmiProblem<Scalar>;
};

template <typename Scalar>
class LmiProblem {
 public:
  VarId add_symmetric(const std::string& name, Eigen::Index n) {
    VariableInfo v;
    v.name = name;
    v.kind = VarKind::SymmetricMatrix;
    v.rows = v.cols = n;
    v.size = n * (n + 1) / 2;
    return push_var(std::move(v));
  }

  VarId add_matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    VariableInfo v;
    v.name = name;
    v.kind = VarKind::Matrix;
    v.rows = rows;
    v.cols = cols;
    v.size = rows * cols;
    return push_var(std::move(v));
  }

  VarId add_scalar(const std::string& name, double lower) {
    VariableInfo v;
    v.name = name;
    v.kind = VarKind::Scalar;
    v.lower = lower;
    return push_var(std::move(v));
  }

  void add_constraint(ConstraintBlock<Scalar>&& block) {
    if (block.dim < 1) throw InvalidInput("lmi problem: constraint block must have positive dimension");
    constraints_.push_back(std::move(block));
  }

  const std::vector<VariableInfo>& variables() const { return vars_; }
  const std::vector<ConstraintBlock<Scalar>>& constraints() const { return constraints_; }
  Eigen::Index num_scalars() const { return num_scalars_; }

  const VariableInfo& variable(VarId id) const {
    if (id < 0 || id >= static_cast<VarId>(vars_.size())) throw InvalidInput("lmi problem: unknown variable id");
    return vars_[id];
  }

  VarId find_variable(const std::string& name) const {
    for (VarId i = 0; i < static_cast<VarId>(vars_.size()); ++i)
      if (vars_[i].name == name) return i;
    throw InvalidInput("lmi problem: unknown variable " + name);
  }

  /// Scalar coordinates of a variable in a flat coordinate vector.
  /// Symmetric matrices store the upper triangle column-major ((i<=j) pairs).
  static Eigen::Index symmetric_coord(Eigen::Index i, Eigen::Index j) {
    if (i > j) std::swap(i, j);
    return j * (j + 1) / 2 + i;
  }

  Eigen::MatrixX<Scalar> value_from_coords(VarId id, const Eigen::VectorX<Scalar>& coords) const {
    const VariableInfo& v = variable(id);
    Eigen::MatrixX<Scalar> m(v.rows, v.cols);
    if (v.kind == VarKind::SymmetricMatrix) {
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i <= j; ++i)
          m(i, j) = m(j, i) = coords(v.offset + symmetric_coord(i, j));
    } else {
      for (Eigen::Index i = 0; i < v.rows; ++i)
        for (Eigen::Index j = 0; j < v.cols; ++j) m(i, j) = coords(v.offset + i * v.cols + j);
    }
    return m;
  }

  void coords_from_value(VarId id, const Eigen::MatrixX<Scalar>& value,
                         Eigen::VectorX<Scalar>& coords) const {
    const VariableInfo& v = variable(id);
    if (value.rows() != v.rows || value.cols() != v.cols)
      throw InvalidInput("lmi problem: assignment dimension mismatch for " + v.name);
    if (v.kind == VarKind::SymmetricMatrix) {
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i <= j; ++i)
          coords(v.offset + symmetric_coord(i, j)) = (value(i, j) + value(j, i)) / Scalar(2);
    } else {
      for (Eigen::Index i = 0; i < v.rows; ++i)
        for (Eigen::Index j = 0; j < v.cols; ++j) coords(v.offset + i * v.cols + j) = value(i, j);
    }
  }

  /// Margin folded into strict blocks: margin_base times the largest absolute
  /// entry over all constant blocks, floored at one.
  Scalar strictness_epsilon(Scalar margin_base) const {
    Scalar scale = Scalar(1);
    for (const auto& c : constraints_)
      if (c.constant.size() > 0) scale = std::max(scale, c.constant.cwiseAbs().maxCoeff());
    return margin_base * scale;
  }

  /// Evaluate constraint `c` at the coordinate vector, normalized to the
  /// "<= 0" sense and with the strictness margin folded in.
  Eigen::MatrixX<Scalar> evaluate_normalized(Eigen::Index c, const Eigen::VectorX<Scalar>& coords,
                                             Scalar margin_eps) const {
    const ConstraintBlock<Scalar>& blk = constraints_[c];
    Eigen::MatrixX<Scalar> s = blk.constant;
    for (const auto& [coord, f] : blk.coeffs) s += coords(coord) * f;
    if (blk.sense == Sense::PositiveSemidefinite) s = -s;
    if (blk.strict)
      s += margin_eps * Eigen::MatrixX<Scalar>::Identity(blk.dim, blk.dim);
    return symmetrize<Scalar>(s);
  }

 private:
  VarId push_var(VariableInfo&& v) {
    v.offset = num_scalars_;
    num_scalars_ += v.size;
    vars_.push_back(std::move(v));
    return static_cast<VarId>(vars_.size() - 1);
  }

  std::vector<VariableInfo> vars_;
  std::vector<ConstraintBlock<Scalar>> constraints_;
  Eigen::Index num_scalars_ = 0;
};

template <typename Scalar>
void ConstraintBlock<Scalar>::add_variable(const LmiProblem<Scalar>& problem, Eigen::Index r0,
                                           Eigen::Index c0, VarId var, Scalar scale,
                                           bool transposed) {
  const VariableInfo& v = problem.variable(var);
  const Eigen::Index rows = transposed ? v.cols : v.rows;
  const Eigen::Index cols = transposed ? v.rows : v.cols;
  check_placement(r0, c0, rows, cols);
  const bool diagonal = (r0 == c0);
  if (diagonal && v.kind != VarKind::SymmetricMatrix && v.kind != VarKind::Scalar)
    throw InvalidInput("constraint block: only symmetric variables may sit on the diagonal");

  auto stamp = [&](Eigen::Index i, Eigen::Index j, Eigen::Index coord) {
    const Eigen::Index a = transposed ? j : i;
    const Eigen::Index b = transposed ? i : j;
    stamp_entry(coeff(coord), r0 + a, c0 + b, scale, diagonal);
  };

  switch (v.kind) {
    case VarKind::SymmetricMatrix:
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i < v.rows; ++i)
          stamp(i, j, v.offset + LmiProblem<Scalar>::symmetric_coord(i, j));
      break;
    case VarKind::Matrix:
      for (Eigen::Index i = 0; i < v.rows; ++i)
        for (Eigen::Index j = 0; j < v.cols; ++j) stamp(i, j, v.offset + i * v.cols + j);
      break;
    case VarKind::Scalar:
      stamp(0, 0, v.offset);
      break;
  }
}

template <typename Scalar>
void ConstraintBlock<Scalar>::add_transformed(const LmiProblem<Scalar>& problem, Eigen::Index r0,
                                              Eigen::Index c0, VarId var,
                                              const Eigen::MatrixX<Scalar>& left,
                                              const Eigen::MatrixX<Scalar>& right, Scalar scale) {
  const VariableInfo& v = problem.variable(var);
  if (left.cols() != v.rows || right.rows() != v.cols)
    throw InvalidInput("constraint block: transform dimensions do not match the variable");
  check_placement(r0, c0, left.rows(), right.cols());
  const bool diagonal = (r0 == c0);
  if (diagonal) {
    if (v.kind == VarKind::Matrix)
      throw InvalidInput("constraint block: only symmetric variables may sit on the diagonal");
    if ((right - left.transpose()).cwiseAbs().maxCoeff() >
        Scalar(1e-12) * (Scalar(1) + left.cwiseAbs().maxCoeff()))
      throw InvalidInput("constraint block: diagonal transformed placement must be a congruence");
  }

  auto stamp_pos = [&](Eigen::Index i, Eigen::Index j, Eigen::Index coord) {
    Eigen::MatrixX<Scalar>& target = coeff(coord);
    const Eigen::MatrixX<Scalar> contrib = scale * (left.col(i) * right.row(j));
    target.block(r0, c0, contrib.rows(), contrib.cols()) += contrib;
    if (!diagonal) target.block(c0, r0, contrib.cols(), contrib.rows()) += contrib.transpose();
  };

  switch (v.kind) {
    case VarKind::SymmetricMatrix:
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i < v.rows; ++i)
          stamp_pos(i, j, v.offset + LmiProblem<Scalar>::symmetric_coord(i, j));
      break;
    case VarKind::Matrix:
      for (Eigen::Index i = 0; i < v.rows; ++i)
        for (Eigen::Index j = 0; j < v.cols; ++j) stamp_pos(i, j, v.offset + i * v.cols + j);
      break;
    case VarKind::Scalar:
      stamp_pos(0, 0, v.offset);
      break;
  }
}

template <typename Scalar>
void ConstraintBlock<Scalar>::add_scalar_matrix(const LmiProblem<Scalar>& problem, VarId var,
                                                const Eigen::MatrixX<Scalar>& m) {
  const VariableInfo& v = problem.variable(var);
  if (v.kind != VarKind::Scalar)
    throw InvalidInput("constraint block: add_scalar_matrix requires a scalar variable");
  if (m.rows() != dim || m.cols() != dim)
    throw InvalidInput("constraint block: scalar coefficient must span the block");
  coeff(v.offset) += symmetrize<Scalar>(m);
}

template <typename Scalar>
struct SolveSettings {
  Scalar feas_tol = Scalar(1e-8);
  Scalar margin = Scalar(1e-6);  // strictness scale factor, see strictness_epsilon
  int max_iter = 2000;           // total Newton iteration cap
  std::uint64_t seed = 0;        // only used to jitter a retry after a numerical failure
  Scalar box_radius = Scalar(1e8);
  bool verbose = false;
};

template <typename Scalar>
struct SolveOutcome {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::map<std::string, Eigen::MatrixX<Scalar>> assignment;  // present iff feasible

  struct Diagnostics {
    Scalar max_violation = std::numeric_limits<Scalar>::quiet_NaN();
    int newton_iterations = 0;
    int outer_stages = 0;
    double wall_seconds = 0.0;
    Scalar best_shift = std::numeric_limits<Scalar>::quiet_NaN();  // best spectral shift t reached
    Scalar margin_applied = Scalar(0);
    std::string message;
  } diagnostics;

  bool feasible() const { return status == SolveStatus::Feasible; }
};

/// Largest violation (most positive eigenvalue) over all normalized,
/// margin-folded blocks at the given assignment. The independent check used
/// to confirm solver outcomes and to replay stored certificates.
template <typename Scalar>
Scalar replay_violation(const LmiProblem<Scalar>& problem,
                        const std::map<std::string, Eigen::MatrixX<Scalar>>& assignment,
                        Scalar margin_base) {
  Eigen::VectorX<Scalar> coords = Eigen::VectorX<Scalar>::Zero(problem.num_scalars());
  for (const auto& [name, value] : assignment)
    problem.coords_from_value(problem.find_variable(name), value, coords);
  const Scalar eps = problem.strictness_epsilon(margin_base);
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(problem.constraints().size()); ++c)
    worst = std::max(worst, max_eigenvalue<Scalar>(problem.evaluate_normalized(c, coords, eps)));
  // Scalar lower bounds participate as box constraints, not blocks.
  for (const auto& v : problem.variables())
    if (v.kind == VarKind::Scalar && std::isfinite(v.lower)) {
      auto it = assignment.find(v.name);
      if (it != assignment.end())
        worst = std::max(worst, static_cast<Scalar>(v.lower) - it->second(0, 0));
    }
  return worst;
}

/// Plain-text exchange dump: dimensions header, then the dense constant and
/// per-coordinate coefficient matrices of every block.
template <typename Scalar>
void dump_problem(const LmiProblem<Scalar>& problem, std::ostream& os) {
  os << "lmi-problem scalars=" << problem.num_scalars()
     << " variables=" << problem.variables().size()
     << " constraints=" << problem.constraints().size() << "\n";
  for (const auto& v : problem.variables()) {
    os << "variable " << v.name << " kind=";
    switch (v.kind) {
      case VarKind::SymmetricMatrix: os << "symmetric"; break;
      case VarKind::Matrix: os << "matrix"; break;
      case VarKind::Scalar: os << "scalar"; break;
    }
    os << " rows=" << v.rows << " cols=" << v.cols << " offset=" << v.offset;
    if (v.kind == VarKind::Scalar && std::isfinite(v.lower)) os << " lower=" << v.lower;
    os << "\n";
  }
  Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "\n", "", "", "", "");
  for (std::size_t c = 0; c < problem.constraints().size(); ++c) {
    const auto& blk = problem.constraints()[c];
    os << "constraint " << c << " label=" << (blk.label.empty() ? "-" : blk.label)
       << " dim=" << blk.dim
       << " sense=" << (blk.sense == Sense::NegativeSemidefinite ? "<=0" : ">=0")
       << " strict=" << (blk.strict ? 1 : 0) << "\n";
    os << "const\n" << blk.constant.format(fmt) << "\n";
    for (const auto& [coord, f] : blk.coeffs)
      os << "coeff " << coord << "\n" << f.format(fmt) << "\n";
  }
}

namespace detail {

/// Normalized view of one block for the phase-I barrier: S(x) <= 0 sense with
/// margins folded and entries scaled to unit magnitude.
template <typename Scalar>
struct PhaseBlock {
  Eigen::Index dim;
  Eigen::MatrixX<Scalar> constant;
  std::vector<std::pair<Eigen::Index, Eigen::MatrixX<Scalar>>> coeffs;
};

template <typename Scalar>
struct BarrierState {
  std::vector<PhaseBlock<Scalar>> blocks;
  Eigen::VectorX<Scalar> lower;  // per coordinate, including t last
  Eigen::VectorX<Scalar> upper;
  Eigen::Index num_coords = 0;  // including t
  Scalar barrier_degree = Scalar(0);
};

/// Slack of block c at z: the negated affine value, including the spectral
/// shift through its -I coefficient. Returns false if any slack loses
/// positive definiteness (Cholesky failure).
template <typename Scalar>
bool compute_slacks(const BarrierState<Scalar>& st, const Eigen::VectorX<Scalar>& z,
                    std::vector<Eigen::LLT<Eigen::MatrixX<Scalar>>>& slack_llts) {
  slack_llts.resize(st.blocks.size());
  for (std::size_t c = 0; c < st.blocks.size(); ++c) {
    const auto& blk = st.blocks[c];
    Eigen::MatrixX<Scalar> s = blk.constant;
    for (const auto& [coord, f] : blk.coeffs) s += z(coord) * f;
    Eigen::MatrixX<Scalar> slack = symmetrize<Scalar>(Eigen::MatrixX<Scalar>(-s));
    slack_llts[c].compute(slack);
    if (slack_llts[c].info() != Eigen::Success) return false;
    // Cholesky can accept a semidefinite edge; insist on a positive diagonal.
    for (Eigen::Index i = 0; i < blk.dim; ++i)
      if (!(slack_llts[c].matrixLLT()(i, i) > Scalar(0))) return false;
  }
  return true;
}

template <typename Scalar>
bool inside_box(const BarrierState<Scalar>& st, const Eigen::VectorX<Scalar>& z) {
  for (Eigen::Index k = 0; k < st.num_coords; ++k)
    if (!(z(k) > st.lower(k) && z(k) < st.upper(k))) return false;
  return true;
}

template <typename Scalar>
Scalar barrier_value(const BarrierState<Scalar>& st, const Eigen::VectorX<Scalar>& z,
                     const std::vector<Eigen::LLT<Eigen::MatrixX<Scalar>>>& slack_llts) {
  Scalar phi = Scalar(0);
  for (const auto& llt : slack_llts) {
    const auto& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i) phi -= Scalar(2) * std::log(l(i, i));
  }
  for (Eigen::Index k = 0; k < st.num_coords; ++k)
    phi -= std::log(st.upper(k) - z(k)) + std::log(z(k) - st.lower(k));
  return phi;
}

}  // namespace detail

/// Decide feasibility of the problem through the phase-I barrier method.
/// Deterministic given the problem and settings. Any feasible outcome has
/// been replayed through the independent eigenvalue check.
template <typename Scalar>
SolveOutcome<Scalar> solve_feasibility(const LmiProblem<Scalar>& problem,
                                       const SolveSettings<Scalar>& settings = {}) {
  using Clock = std::chrono::steady_clock;
  const auto t_start = Clock::now();

  SolveOutcome<Scalar> out;
  const Scalar margin_eps = problem.strictness_epsilon(settings.margin);
  out.diagnostics.margin_applied = margin_eps;

  if (problem.constraints().empty()) {
    out.status = SolveStatus::Feasible;
    out.diagnostics.max_violation = Scalar(0);
    out.diagnostics.message = "no constraints";
    return out;
  }

  const Eigen::Index p = problem.num_scalars();
  detail::BarrierState<Scalar> st;
  st.num_coords = p + 1;  // trailing spectral shift t
  const Eigen::Index t_coord = p;

  // Normalize blocks: <=0 sense, margins folded, per-block magnitude scaling,
  // and the shift coordinate appended to every block with coefficient -I.
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(problem.constraints().size()); ++c) {
    const auto& blk = problem.constraints()[c];
    detail::PhaseBlock<Scalar> pb;
    pb.dim = blk.dim;
    const Scalar sense_sign = (blk.sense == Sense::PositiveSemidefinite) ? Scalar(-1) : Scalar(1);
    pb.constant = sense_sign * blk.constant;
    if (blk.strict) pb.constant += margin_eps * Eigen::MatrixX<Scalar>::Identity(blk.dim, blk.dim);
    Scalar block_scale = std::max(Scalar(1), pb.constant.cwiseAbs().maxCoeff());
    pb.constant /= block_scale;
    pb.coeffs.reserve(blk.coeffs.size() + 1);
    for (const auto& [coord, f] : blk.coeffs)
      pb.coeffs.emplace_back(coord, symmetrize<Scalar>(Eigen::MatrixX<Scalar>((sense_sign / block_scale) * f)));
    pb.coeffs.emplace_back(t_coord, Eigen::MatrixX<Scalar>(-Eigen::MatrixX<Scalar>::Identity(blk.dim, blk.dim)));
    st.blocks.push_back(std::move(pb));
    st.barrier_degree += static_cast<Scalar>(blk.dim);
  }

  // Scalar lower bounds become 1x1 blocks so they share the spectral shift;
  // an off-center one-sided box barrier would otherwise distort phase I.
  for (const auto& v : problem.variables()) {
    if (v.kind == VarKind::Scalar && std::isfinite(v.lower)) {
      detail::PhaseBlock<Scalar> pb;
      pb.dim = 1;
      pb.constant = Eigen::MatrixX<Scalar>::Constant(1, 1, static_cast<Scalar>(v.lower));
      pb.coeffs.emplace_back(v.offset, Eigen::MatrixX<Scalar>::Constant(1, 1, Scalar(-1)));
      pb.coeffs.emplace_back(t_coord, Eigen::MatrixX<Scalar>::Constant(1, 1, Scalar(-1)));
      st.blocks.push_back(std::move(pb));
      st.barrier_degree += Scalar(1);
    }
  }

  // Symmetric safety box, far from any expected solution scale.
  st.lower = Eigen::VectorX<Scalar>::Constant(st.num_coords, -settings.box_radius);
  st.upper = Eigen::VectorX<Scalar>::Constant(st.num_coords, settings.box_radius);
  st.barrier_degree += Scalar(2) * static_cast<Scalar>(st.num_coords);

  // Default start: identity for symmetric matrices, zero elsewhere.
  Eigen::VectorX<Scalar> z0 = Eigen::VectorX<Scalar>::Zero(st.num_coords);
  for (const auto& v : problem.variables()) {
    if (v.kind == VarKind::SymmetricMatrix) {
      for (Eigen::Index i = 0; i < v.rows; ++i)
        z0(v.offset + LmiProblem<Scalar>::symmetric_coord(i, i)) = Scalar(1);
    }
  }

  auto run = [&](Eigen::VectorX<Scalar> z, SolveOutcome<Scalar>& result) -> bool {
    // Initial shift strictly above the largest block eigenvalue.
    Scalar worst = -std::numeric_limits<Scalar>::infinity();
    for (const auto& blk : st.blocks) {
      Eigen::MatrixX<Scalar> s = blk.constant;
      for (const auto& [coord, f] : blk.coeffs)
        if (coord != t_coord) s += z(coord) * f;
      worst = std::max(worst, max_eigenvalue<Scalar>(s));
    }
    z(t_coord) = worst + Scalar(1);
    st.upper(t_coord) = z(t_coord) + Scalar(1);

    std::vector<Eigen::LLT<Eigen::MatrixX<Scalar>>> slack_llts;
    if (!detail::inside_box(st, z) || !detail::compute_slacks(st, z, slack_llts)) {
      result.diagnostics.message = "initial point infeasible for the barrier";
      return false;
    }

    const Scalar nu = st.barrier_degree;
    const Scalar gap_min = std::max(Scalar(1e-12), settings.feas_tol * Scalar(1e-3));
    Scalar eta = Scalar(1);
    const Scalar eta_max = nu / gap_min;
    int newton_total = 0;
    int consecutive_stalls = 0;
    bool classified = false;

    bool stage_converged = false;
    std::vector<Eigen::MatrixX<Scalar>> whitened;       // per block: d^2 x K columns
    std::vector<std::vector<Eigen::Index>> coord_lists;  // per block: coordinate per column
    whitened.resize(st.blocks.size());
    coord_lists.resize(st.blocks.size());
    for (std::size_t c = 0; c < st.blocks.size(); ++c) {
      coord_lists[c].reserve(st.blocks[c].coeffs.size());
      for (const auto& [coord, f] : st.blocks[c].coeffs) coord_lists[c].push_back(coord);
    }

    while (!classified) {
      // Center for the current eta; approximate centering (newton decrement
      // around 1e-3) is enough for the factor-2 gap bound used below.
      bool stage_stalled = false;
      stage_converged = false;
      for (int inner = 0; inner < 200; ++inner) {
        if (newton_total >= settings.max_iter) break;
        if (z(t_coord) < Scalar(0)) break;  // strictly feasible already
        ++newton_total;

        if (!detail::compute_slacks(st, z, slack_llts)) {
          result.diagnostics.message = "slack lost definiteness";
          result.diagnostics.newton_iterations = newton_total;
          return false;
        }

        Eigen::VectorX<Scalar> grad = Eigen::VectorX<Scalar>::Zero(st.num_coords);
        Eigen::MatrixX<Scalar> hess = Eigen::MatrixX<Scalar>::Zero(st.num_coords, st.num_coords);
        grad(t_coord) += eta;  // objective

        for (std::size_t c = 0; c < st.blocks.size(); ++c) {
          const auto& blk = st.blocks[c];
          const Eigen::Index d = blk.dim;
          const Eigen::Index k = static_cast<Eigen::Index>(blk.coeffs.size());
          // Whitened coefficients L^{-1} F L^{-T}; the Hessian is their Gram.
          Eigen::MatrixX<Scalar>& vecs = whitened[c];
          vecs.resize(d * d, k);
          const auto& l = slack_llts[c].matrixL();
          for (Eigen::Index a = 0; a < k; ++a) {
            Eigen::MatrixX<Scalar> g = l.solve(blk.coeffs[a].second);
            g = l.solve(g.transpose().eval());
            grad(blk.coeffs[a].first) += g.trace();
            vecs.col(a) = Eigen::Map<Eigen::VectorX<Scalar>>(g.data(), d * d);
          }
          Eigen::MatrixX<Scalar> gram = Eigen::MatrixX<Scalar>::Zero(k, k);
          gram.template selfadjointView<Eigen::Lower>().rankUpdate(vecs.transpose());
          for (Eigen::Index a = 0; a < k; ++a)
            for (Eigen::Index b = 0; b <= a; ++b) {
              hess(blk.coeffs[a].first, blk.coeffs[b].first) += gram(a, b);
              if (a != b) hess(blk.coeffs[b].first, blk.coeffs[a].first) += gram(a, b);
            }
        }
        for (Eigen::Index kk = 0; kk < st.num_coords; ++kk) {
          const Scalar du = st.upper(kk) - z(kk);
          const Scalar dl = z(kk) - st.lower(kk);
          grad(kk) += Scalar(1) / du - Scalar(1) / dl;
          hess(kk, kk) += Scalar(1) / (du * du) + Scalar(1) / (dl * dl);
        }

        // Jacobi-equilibrated Newton solve; box terms near their bound would
        // otherwise drive the raw system beyond double-precision conditioning.
        Eigen::VectorX<Scalar> scale_diag(st.num_coords);
        for (Eigen::Index kk = 0; kk < st.num_coords; ++kk)
          scale_diag(kk) = Scalar(1) / std::sqrt(std::max(hess(kk, kk), Scalar(1e-300)));
        Eigen::MatrixX<Scalar> hess_eq = scale_diag.asDiagonal() * hess * scale_diag.asDiagonal();
        const Eigen::VectorX<Scalar> grad_eq = scale_diag.asDiagonal() * grad;
        Eigen::VectorX<Scalar> step;
        Scalar ridge = Scalar(0);
        for (int attempt = 0; attempt < 6; ++attempt) {
          Eigen::LDLT<Eigen::MatrixX<Scalar>> ldlt(
              ridge == Scalar(0)
                  ? hess_eq
                  : Eigen::MatrixX<Scalar>(hess_eq + ridge * Eigen::MatrixX<Scalar>::Identity(
                                                                 st.num_coords, st.num_coords)));
          step = scale_diag.asDiagonal() * Eigen::VectorX<Scalar>(-ldlt.solve(grad_eq));
          if (ldlt.info() == Eigen::Success && grad.dot(step) < Scalar(0)) break;
          ridge = (ridge == Scalar(0)) ? Scalar(1e-12) : ridge * Scalar(100);
          step.setZero();
        }
        const Scalar descent = grad.dot(step);
        if (!(descent < Scalar(0))) break;  // stationary for this stage

        // Longest step keeping the box strictly feasible.
        Scalar alpha = Scalar(1);
        for (Eigen::Index kk = 0; kk < st.num_coords; ++kk) {
          if (step(kk) > Scalar(0))
            alpha = std::min(alpha, Scalar(0.995) * (st.upper(kk) - z(kk)) / step(kk));
          if (step(kk) < Scalar(0))
            alpha = std::min(alpha, Scalar(0.995) * (st.lower(kk) - z(kk)) / step(kk));
        }
        // Exact step to the semidefinite boundary via the whitened direction:
        // T(z + a step) stays definite iff a * lambda_max(sum step_k G_k) < 1.
        for (std::size_t c = 0; c < st.blocks.size(); ++c) {
          const Eigen::Index d = st.blocks[c].dim;
          Eigen::VectorX<Scalar> sub(coord_lists[c].size());
          for (std::size_t a = 0; a < coord_lists[c].size(); ++a) sub(a) = step(coord_lists[c][a]);
          Eigen::VectorX<Scalar> dirvec = whitened[c] * sub;
          Eigen::Map<Eigen::MatrixX<Scalar>> dir(dirvec.data(), d, d);
          const Scalar beta = max_eigenvalue<Scalar>(Eigen::MatrixX<Scalar>(dir));
          if (beta > Scalar(0)) alpha = std::min(alpha, Scalar(0.995) / beta);
        }

        // Armijo backtracking on the stage objective.
        const Scalar f0 = eta * z(t_coord) + detail::barrier_value(st, z, slack_llts);
        bool moved = false;
        for (int bt = 0; bt < 50; ++bt) {
          Eigen::VectorX<Scalar> trial = z + alpha * step;
          std::vector<Eigen::LLT<Eigen::MatrixX<Scalar>>> trial_llts;
          if (detail::inside_box(st, trial) && detail::compute_slacks(st, trial, trial_llts)) {
            const Scalar f1 = eta * trial(t_coord) + detail::barrier_value(st, trial, trial_llts);
            if (f1 <= f0 + Scalar(0.1) * alpha * descent) {
              z = std::move(trial);
              moved = true;
              break;
            }
          }
          alpha *= Scalar(0.5);
        }
        const Scalar decrement_sq = -descent;
        if (settings.verbose) {
          Scalar slack_min = std::numeric_limits<Scalar>::infinity();
          for (const auto& blk : st.blocks) {
            Eigen::MatrixX<Scalar> s = blk.constant;
            for (const auto& [coord, f] : blk.coeffs) s += z(coord) * f;
            slack_min = std::min(slack_min, -max_eigenvalue<Scalar>(s));
          }
          std::fprintf(stderr,
                       "[sdp] eta=%.1e t=%.6e decr2=%.3e alpha=%.3e moved=%d slackmin=%.3e\n",
                       static_cast<double>(eta), static_cast<double>(z(t_coord)),
                       static_cast<double>(decrement_sq), static_cast<double>(alpha),
                       static_cast<int>(moved), static_cast<double>(slack_min));
        }
        if (!moved) {
          // Line search exhausted with descent left over: numerically stalled.
          if (decrement_sq > Scalar(1e-10) * (Scalar(1) + std::abs(f0))) stage_stalled = true;
          break;
        }
        if (decrement_sq < Scalar(1e-6) * (Scalar(1) + std::abs(f0) * Scalar(1e-3))) {
          stage_converged = true;
          break;
        }
      }

      result.diagnostics.best_shift = z(t_coord);
      result.diagnostics.newton_iterations = newton_total;
      ++result.diagnostics.outer_stages;

      if (z(t_coord) < Scalar(0)) {
        classified = true;  // strictly feasible point found
        break;
      }
      consecutive_stalls = stage_stalled ? consecutive_stalls + 1 : 0;
      if (consecutive_stalls >= 2) {
        result.diagnostics.message = "newton stalled before classification";
        return false;
      }
      if (newton_total >= settings.max_iter) break;
      if (eta >= eta_max && stage_converged) break;
      if (stage_converged) eta = std::min(eta * Scalar(10), eta_max);
    }

    if (z(t_coord) < Scalar(0)) {
      result.assignment.clear();
      Eigen::VectorX<Scalar> coords = z.head(p);
      for (VarId id = 0; id < static_cast<VarId>(problem.variables().size()); ++id)
        result.assignment[problem.variable(id).name] = problem.value_from_coords(id, coords);
      result.status = SolveStatus::Feasible;
      return true;
    }

    // No strictly feasible point found. An infeasibility verdict needs an
    // approximately centered final stage for the gap bound t* >= t - nu/eta
    // to mean anything; anything else is a numerical failure.
    if (!stage_converged) {
      result.diagnostics.message = "iteration limit before classification";
      return false;
    }
    const Scalar gap = st.barrier_degree / eta;
    result.status = SolveStatus::Infeasible;
    result.diagnostics.message = (z(t_coord) - Scalar(2) * gap > Scalar(0))
                                     ? "gap-certified infeasible"
                                     : "infeasible at the strictness margin (boundary case)";
    return true;
  };

  bool done = run(z0, out);
  if (!done) {
    // One deterministic retry from a seeded, slightly jittered start.
    Rng rng(derive_seed({settings.seed, 0x736470u}));
    Eigen::VectorX<Scalar> z1 = z0;
    for (Eigen::Index k = 0; k < p; ++k)
      z1(k) += static_cast<Scalar>(0.1 * rng.normal());
    SolveOutcome<Scalar> retry_out;
    retry_out.diagnostics = out.diagnostics;
    if (run(z1, retry_out)) {
      retry_out.diagnostics.margin_applied = margin_eps;
      out = std::move(retry_out);
      done = true;
    }
  }

  if (!done) out.status = SolveStatus::NumericalFailure;

  if (out.status == SolveStatus::Feasible) {
    out.diagnostics.max_violation = replay_violation<Scalar>(problem, out.assignment, settings.margin);
    if (!(out.diagnostics.max_violation <= settings.feas_tol)) {
      out.status = SolveStatus::NumericalFailure;
      out.diagnostics.message = "assignment failed the independent eigenvalue replay";
      out.assignment.clear();
    }
  }

  out.diagnostics.wall_seconds =
      std::chrono::duration<double>(Clock::now() - t_start).count();
  return out;
}

}  // namespace noisylmi::sdp
