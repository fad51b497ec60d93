#pragma once

// Controller synthesis from consistency sets: builds the energy-bound and
// instantaneous-bound LMI programs, recovers the state-feedback gain from a
// feasible assignment, and verifies certificates both exactly (a one-variable
// multiplier search) and empirically (set sampling).

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "noisylmi/conset.hpp"
#include "noisylmi/errors.hpp"
#include "noisylmi/linalg.hpp"
#include "noisylmi/parallel.hpp"
#include "noisylmi/random.hpp"
#include "noisylmi/sdp.hpp"

namespace noisylmi::synth {

template <typename Scalar>
struct SynthesisCertificate {
  Eigen::MatrixX<Scalar> K;      // m x n gain
  Eigen::MatrixX<Scalar> P;      // n x n Lyapunov matrix, positive definite
  Eigen::MatrixX<Scalar> Y;      // m x n, equals K P
  Eigen::VectorX<Scalar> taus;   // multipliers, instantaneous case only
  Scalar margin_achieved = Scalar(0);
};

/// K = Y P^{-1} through a Cholesky solve; P must be positive definite.
template <typename Scalar>
Eigen::MatrixX<Scalar> recover_gain(const Eigen::MatrixX<Scalar>& p, const Eigen::MatrixX<Scalar>& y) {
  if (p.rows() != p.cols() || y.cols() != p.rows())
    throw InvalidInput("recover_gain: dimension mismatch");
  const Scalar lam_min = min_eigenvalue<Scalar>(p);
  const Scalar lam_max = max_eigenvalue<Scalar>(p);
  Eigen::LLT<Eigen::MatrixX<Scalar>> llt(symmetrize<Scalar>(p));
  if (llt.info() != Eigen::Success || !(lam_min > Scalar(0)) ||
      lam_min <= std::numeric_limits<Scalar>::epsilon() * Scalar(100) * std::max(lam_max, Scalar(1)))
    throw NumericalRankError("recover_gain: Lyapunov matrix is numerically singular");
  return llt.solve(y.transpose()).transpose();
}

/// Energy-bound synthesis program on the consistency-quadratic coefficients:
/// variables P (symmetric) and Y; P > 0 and the (3n+m)-block strictly negative.
template <typename Scalar>
sdp::LmiProblem<Scalar> build_energy_lmi(const conset::ConsistencyQuadratic<Scalar>& q,
                                         Eigen::Index n, Eigen::Index m) {
  if (q.quad.rows() != n + m || q.cross.rows() != n || q.cross.cols() != n + m ||
      q.offset.rows() != n)
    throw InvalidInput("build_energy_lmi: coefficient dimensions inconsistent");
  sdp::LmiProblem<Scalar> problem;
  const sdp::VarId p_var = problem.add_symmetric("P", n);
  const sdp::VarId y_var = problem.add_matrix("Y", m, n);

  {
    sdp::ConstraintBlock<Scalar> pos("lyapunov-positivity", n, sdp::Sense::PositiveSemidefinite, true);
    pos.add_variable(problem, 0, 0, p_var);
    problem.add_constraint(std::move(pos));
  }
  {
    // Rows/cols partitioned (n, n, n+m).
    sdp::ConstraintBlock<Scalar> blk("energy-synthesis", 3 * n + m, sdp::Sense::NegativeSemidefinite, true);
    blk.add_variable(problem, 0, 0, p_var, Scalar(-1));
    blk.add_constant(0, 0, Eigen::MatrixX<Scalar>(-q.offset));
    blk.add_constant(0, 2 * n, q.cross);
    blk.add_variable(problem, n, n, p_var, Scalar(-1));
    blk.add_variable(problem, n, 2 * n, p_var);
    blk.add_variable(problem, n, 3 * n, y_var, Scalar(1), /*transposed=*/true);
    blk.add_constant(2 * n, 2 * n, Eigen::MatrixX<Scalar>(-q.quad));
    problem.add_constraint(std::move(blk));
  }
  return problem;
}

template <typename Scalar>
sdp::LmiProblem<Scalar> build_energy_lmi(const conset::EnergyConsistencySet<Scalar>& set) {
  conset::ConsistencyQuadratic<Scalar> q{set.quad, set.cross, set.offset};
  return build_energy_lmi<Scalar>(q, set.n, set.m);
}

/// Ratio between the largest and smallest regressor column norms. The
/// multiplier variables absorb scale, but a span beyond six orders of
/// magnitude degrades the solve numerically.
template <typename Scalar>
Scalar data_scale_span(const conset::DataMatrices<Scalar>& data) {
  const Eigen::MatrixX<Scalar> w = data.regressor();
  Scalar lo = std::numeric_limits<Scalar>::infinity();
  Scalar hi = Scalar(0);
  for (Eigen::Index k = 0; k < w.cols(); ++k) {
    const Scalar norm = w.col(k).norm();
    lo = std::min(lo, norm);
    hi = std::max(hi, norm);
  }
  return lo > Scalar(0) ? hi / lo : std::numeric_limits<Scalar>::infinity();
}

/// Instantaneous-bound program: variables P, Y and one nonnegative multiplier
/// per data point; a single strict block of dimension 3n+m partitioned
/// (n, n, m, n), the base pattern minus the multiplier combination of the
/// per-step data outer products.
template <typename Scalar>
sdp::LmiProblem<Scalar> build_inst_lmi(const conset::DataMatrices<Scalar>& data,
                                       const conset::InstantaneousBound<Scalar>& bound) {
  data.validate();
  bound.validate();
  if (data_scale_span<Scalar>(data) > Scalar(1e6))
    std::clog << "noisylmi: regressor column norms span more than six orders of magnitude; "
                 "expect a poorly conditioned multiplier program\n";
  const Eigen::Index n = data.state_dim();
  const Eigen::Index m = data.input_dim();
  const Eigen::Index horizon = data.horizon();
  const Eigen::Index dim = 3 * n + m;

  sdp::LmiProblem<Scalar> problem;
  const sdp::VarId p_var = problem.add_symmetric("P", n);
  const sdp::VarId y_var = problem.add_matrix("Y", m, n);
  std::vector<sdp::VarId> tau_vars;
  tau_vars.reserve(horizon);
  for (Eigen::Index k = 0; k < horizon; ++k)
    tau_vars.push_back(problem.add_scalar("tau_" + std::to_string(k), 0.0));

  {
    sdp::ConstraintBlock<Scalar> pos("lyapunov-positivity", n, sdp::Sense::PositiveSemidefinite, true);
    pos.add_variable(problem, 0, 0, p_var);
    problem.add_constraint(std::move(pos));
  }

  sdp::ConstraintBlock<Scalar> blk("instantaneous-synthesis", dim, sdp::Sense::NegativeSemidefinite, true);
  blk.add_variable(problem, 0, 0, p_var, Scalar(-1));
  blk.add_variable(problem, n, n, p_var);
  blk.add_variable(problem, n, 2 * n, y_var, Scalar(1), /*transposed=*/true);
  blk.add_variable(problem, 2 * n, 2 * n + m, y_var);
  blk.add_variable(problem, 2 * n + m, 2 * n + m, p_var, Scalar(-1));

  Eigen::MatrixX<Scalar> envelope = Eigen::MatrixX<Scalar>::Zero(dim, dim);
  envelope.topLeftCorner(2 * n + m, 2 * n + m) =
      bound.theta * Eigen::MatrixX<Scalar>::Identity(2 * n + m, 2 * n + m);
  for (Eigen::Index k = 0; k < horizon; ++k) {
    Eigen::VectorX<Scalar> v = Eigen::VectorX<Scalar>::Zero(dim);
    v.head(n) = data.X1.col(k);
    v.segment(n, n) = -data.X0.col(k);
    v.segment(2 * n, m) = -data.U0.col(k);
    const Eigen::MatrixX<Scalar> coeff = envelope - v * v.transpose();
    blk.add_scalar_matrix(problem, tau_vars[k], coeff);
  }
  problem.add_constraint(std::move(blk));
  return problem;
}

/// Negated worst strict-block eigenvalue at the assignment with no margin
/// folded: how deep inside the strict inequalities the certificate sits.
template <typename Scalar>
Scalar achieved_margin(const sdp::LmiProblem<Scalar>& problem,
                       const std::map<std::string, Eigen::MatrixX<Scalar>>& assignment) {
  return -sdp::replay_violation<Scalar>(problem, assignment, Scalar(0));
}

template <typename Scalar>
std::optional<SynthesisCertificate<Scalar>> certificate_from_outcome(
    const sdp::LmiProblem<Scalar>& problem, const sdp::SolveOutcome<Scalar>& outcome,
    Eigen::Index horizon = 0) {
  if (!outcome.feasible()) return std::nullopt;
  SynthesisCertificate<Scalar> cert;
  cert.P = outcome.assignment.at("P");
  cert.Y = outcome.assignment.at("Y");
  cert.K = recover_gain<Scalar>(cert.P, cert.Y);
  if (horizon > 0) {
    cert.taus.resize(horizon);
    for (Eigen::Index k = 0; k < horizon; ++k)
      cert.taus(k) = outcome.assignment.at("tau_" + std::to_string(k))(0, 0);
  }
  cert.margin_achieved = achieved_margin<Scalar>(problem, outcome.assignment);
  return cert;
}

/// Build, solve and extract in one call.
template <typename Scalar>
std::pair<sdp::SolveOutcome<Scalar>, std::optional<SynthesisCertificate<Scalar>>> synthesize_energy(
    const conset::EnergyConsistencySet<Scalar>& set, const sdp::SolveSettings<Scalar>& settings = {}) {
  sdp::LmiProblem<Scalar> problem = build_energy_lmi<Scalar>(set);
  sdp::SolveOutcome<Scalar> outcome = sdp::solve_feasibility<Scalar>(problem, settings);
  auto cert = certificate_from_outcome<Scalar>(problem, outcome);
  return {std::move(outcome), std::move(cert)};
}

template <typename Scalar>
std::pair<sdp::SolveOutcome<Scalar>, std::optional<SynthesisCertificate<Scalar>>> synthesize_inst(
    const conset::DataMatrices<Scalar>& data, const conset::InstantaneousBound<Scalar>& bound,
    const sdp::SolveSettings<Scalar>& settings = {}) {
  sdp::LmiProblem<Scalar> problem = build_inst_lmi<Scalar>(data, bound);
  sdp::SolveOutcome<Scalar> outcome = sdp::solve_feasibility<Scalar>(problem, settings);
  auto cert = certificate_from_outcome<Scalar>(problem, outcome, data.horizon());
  return {std::move(outcome), std::move(cert)};
}

template <typename Scalar>
struct MultiplierSearchReport {
  bool holds = false;
  Scalar best_multiplier = Scalar(0);
  Scalar min_lambda_max = std::numeric_limits<Scalar>::infinity();
};

/// Exact certificate check for the energy set: the robust Lyapunov decrease
/// over the whole ellipsoid holds for (K, P) iff some multiplier lambda > 0
/// makes the 2x2-block condition
///   [ -P + (1/lambda) spread,            -center [P; KP] ;
///     *,                      -P + lambda [P; KP]^T quad^{-1} [P; KP] ] < 0.
/// The largest eigenvalue is convex in lambda, so a log-grid scan plus a
/// golden-section refinement finds the minimum.
template <typename Scalar>
bool verify_energy_certificate(const conset::EnergyConsistencySet<Scalar>& set,
                               const Eigen::MatrixX<Scalar>& gain, const Eigen::MatrixX<Scalar>& p,
                               Scalar tol = Scalar(0),
                               MultiplierSearchReport<Scalar>* report = nullptr) {
  const Eigen::Index n = set.n;
  if (p.rows() != n || p.cols() != n || gain.rows() != set.m || gain.cols() != n)
    throw InvalidInput("verify_energy_certificate: dimension mismatch");
  if (!(min_eigenvalue<Scalar>(p) > Scalar(0))) {
    if (report) *report = {};
    return false;
  }

  const Eigen::MatrixX<Scalar> y = gain * p;
  Eigen::MatrixX<Scalar> stacked(n + set.m, n);  // [P; Y]
  stacked.topRows(n) = p;
  stacked.bottomRows(set.m) = y;

  Eigen::LLT<Eigen::MatrixX<Scalar>> quad_llt(set.quad);
  const Eigen::MatrixX<Scalar> weighted =
      symmetrize<Scalar>(stacked.transpose() * quad_llt.solve(stacked));

  Eigen::MatrixX<Scalar> base = Eigen::MatrixX<Scalar>::Zero(2 * n, 2 * n);
  base.topLeftCorner(n, n) = -p;
  base.bottomRightCorner(n, n) = -p;
  base.topRightCorner(n, n) = -set.center * stacked;
  base.bottomLeftCorner(n, n) = base.topRightCorner(n, n).transpose();

  auto eval = [&](Scalar lambda) {
    Eigen::MatrixX<Scalar> block = base;
    block.topLeftCorner(n, n) += set.spread / lambda;
    block.bottomRightCorner(n, n) += lambda * weighted;
    return max_eigenvalue<Scalar>(block);
  };

  // Coarse log grid, then golden-section refinement of the convex profile.
  Scalar best_log = Scalar(0);
  Scalar best_val = std::numeric_limits<Scalar>::infinity();
  constexpr int kGridPoints = 65;
  for (int i = 0; i < kGridPoints; ++i) {
    const Scalar lg = Scalar(-8) + Scalar(16) * Scalar(i) / Scalar(kGridPoints - 1);
    const Scalar v = eval(std::pow(Scalar(10), lg));
    if (v < best_val) {
      best_val = v;
      best_log = lg;
    }
  }
  const Scalar grid_step = Scalar(16) / Scalar(kGridPoints - 1);
  Scalar lo = best_log - grid_step;
  Scalar hi = best_log + grid_step;
  const Scalar golden = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar x1 = hi - golden * (hi - lo);
  Scalar x2 = lo + golden * (hi - lo);
  Scalar f1 = eval(std::pow(Scalar(10), x1));
  Scalar f2 = eval(std::pow(Scalar(10), x2));
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - golden * (hi - lo);
      f1 = eval(std::pow(Scalar(10), x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + golden * (hi - lo);
      f2 = eval(std::pow(Scalar(10), x2));
    }
  }
  const Scalar refined = std::min(f1, f2);
  const Scalar refined_log = (f1 < f2) ? x1 : x2;
  if (refined < best_val) {
    best_val = refined;
    best_log = refined_log;
  }

  if (report) {
    report->holds = best_val < -tol;
    report->best_multiplier = std::pow(Scalar(10), best_log);
    report->min_lambda_max = best_val;
  }
  return best_val < -tol;
}

/// Necessary condition carried by any feasible multiplier vector: the
/// multiplier-weighted measured regressor Gram must dominate theta I.
template <typename Scalar>
bool verify_inst_necessary(const Eigen::VectorX<Scalar>& taus, const conset::DataMatrices<Scalar>& data,
                           const conset::InstantaneousBound<Scalar>& bound, Scalar tol = Scalar(0),
                           Scalar* lambda_min_out = nullptr) {
  data.validate();
  if (taus.size() != data.horizon())
    throw InvalidInput("verify_inst_necessary: multiplier count must equal the horizon");
  const Eigen::Index dim = data.state_dim() + data.input_dim();
  const Eigen::MatrixX<Scalar> w = data.regressor();
  Eigen::MatrixX<Scalar> sum = Eigen::MatrixX<Scalar>::Zero(dim, dim);
  for (Eigen::Index k = 0; k < data.horizon(); ++k) {
    const Eigen::VectorX<Scalar> col = w.col(k);
    sum += taus(k) * (col * col.transpose() -
                      bound.theta * Eigen::MatrixX<Scalar>::Identity(dim, dim));
  }
  const Scalar lam = min_eigenvalue<Scalar>(sum);
  if (lambda_min_out) *lambda_min_out = lam;
  return lam > tol;
}

template <typename Scalar>
struct SamplingReport {
  Scalar worst_spectral_radius = -std::numeric_limits<Scalar>::infinity();
  Scalar worst_lyapunov_gap = -std::numeric_limits<Scalar>::infinity();
  Eigen::Index requested = 0;
  Eigen::Index checked = 0;
  bool starved = false;

  bool pass() const {
    return checked > 0 && worst_spectral_radius < Scalar(1) && worst_lyapunov_gap < Scalar(0);
  }
};

namespace detail {

template <typename Scalar>
void fold_member(SamplingReport<Scalar>& report, const Eigen::MatrixX<Scalar>& member,
                 const Eigen::MatrixX<Scalar>& gain, const Eigen::MatrixX<Scalar>& p) {
  const Eigen::Index n = p.rows();
  const Eigen::MatrixX<Scalar> closed =
      member.leftCols(n) + member.rightCols(member.cols() - n) * gain;
  report.worst_spectral_radius =
      std::max(report.worst_spectral_radius, spectral_radius<Scalar>(closed));
  report.worst_lyapunov_gap = std::max(
      report.worst_lyapunov_gap,
      max_eigenvalue<Scalar>(Eigen::MatrixX<Scalar>(closed * p * closed.transpose() - p)));
  ++report.checked;
}

}  // namespace detail

/// Empirical certificate check over the energy set: N boundary members, each
/// scored by closed-loop spectral radius and Lyapunov decrease.
template <typename Scalar>
SamplingReport<Scalar> verify_by_sampling(const conset::EnergyConsistencySet<Scalar>& set,
                                          const Eigen::MatrixX<Scalar>& gain,
                                          const Eigen::MatrixX<Scalar>& p, Eigen::Index samples,
                                          std::uint64_t seed, int threads = 0) {
  if (samples < 1) throw InvalidInput("verify_by_sampling: sample count must be >= 1");
  SamplingReport<Scalar> report;
  report.requested = samples;
  std::vector<Eigen::MatrixX<Scalar>> members(samples);
  parallel_for(
      static_cast<std::size_t>(samples),
      [&](std::size_t i) {
        members[i] = conset::sample_energy<Scalar>(set, conset::SampleMode::Boundary,
                                                   derive_seed({seed, i}));
      },
      threads);
  for (const auto& member : members) detail::fold_member<Scalar>(report, member, gain, p);
  return report;
}

/// Empirical certificate check over the instantaneous set: members proposed
/// from the enclosing energy ellipsoid (the conservative conversion of theta)
/// and rejection-filtered through per-step membership. Yield below 1% stops
/// with a partial, starvation-flagged report.
template <typename Scalar>
SamplingReport<Scalar> verify_by_sampling(const conset::DataMatrices<Scalar>& data,
                                          const conset::InstantaneousBound<Scalar>& bound,
                                          const Eigen::MatrixX<Scalar>& gain,
                                          const Eigen::MatrixX<Scalar>& p, Eigen::Index samples,
                                          std::uint64_t seed, int threads = 0) {
  if (samples < 1) throw InvalidInput("verify_by_sampling: sample count must be >= 1");
  conset::EnergyBound<Scalar> enclosing;  // per-step bound theta accumulates to T theta I
  enclosing.n = data.state_dim();
  enclosing.m = data.input_dim();
  const Eigen::Index err_dim = 2 * enclosing.n + enclosing.m;
  enclosing.Theta = static_cast<Scalar>(data.horizon()) * bound.theta *
                    Eigen::MatrixX<Scalar>::Identity(err_dim, err_dim);
  const conset::EnergyConsistencySet<Scalar> envelope_set =
      conset::build_energy_set<Scalar>(data, enclosing);

  SamplingReport<Scalar> report;
  report.requested = samples;
  const std::size_t max_attempts = static_cast<std::size_t>(samples) * 100;
  const std::size_t chunk = std::max<std::size_t>(64, static_cast<std::size_t>(samples));
  std::size_t attempted = 0;
  while (report.checked < samples && attempted < max_attempts) {
    const std::size_t batch = std::min(chunk, max_attempts - attempted);
    std::vector<Eigen::MatrixX<Scalar>> members(batch);
    std::vector<char> accepted(batch, 0);
    parallel_for(
        batch,
        [&](std::size_t i) {
          const std::uint64_t member_seed = derive_seed({seed, attempted + i});
          members[i] =
              conset::sample_energy<Scalar>(envelope_set, conset::SampleMode::Interior, member_seed);
          accepted[i] = conset::membership_inst<Scalar>(data, bound, members[i]) ? 1 : 0;
        },
        threads);
    for (std::size_t i = 0; i < batch && report.checked < samples; ++i)
      if (accepted[i]) detail::fold_member<Scalar>(report, members[i], gain, p);
    attempted += batch;
  }
  report.starved = report.checked < samples;
  return report;
}

}  // namespace noisylmi::synth
