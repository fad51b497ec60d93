#include <doctest.h>

#include <Eigen/Dense>

#include "noisylmi/linalg.hpp"
#include "noisylmi/matfact.hpp"
#include "noisylmi/random.hpp"

using Eigen::MatrixXd;
using namespace noisylmi;
using matfact::InclusionInstance;

namespace {

// PSD bound of exact rank together with a factor L (G = L L^T), so planted
// instances D0 = L Xi satisfy D0 D0^T <= G without numerical-rank leakage.
struct RankedBound {
  MatrixXd G;
  MatrixXd L;  // n x rank
};

RankedBound random_psd_with_rank(Rng& rng, Eigen::Index n, Eigen::Index rank, double scale = 1.0) {
  MatrixXd l(n, rank);
  for (Eigen::Index r = 0; r < rank; ++r)
    l.col(r) = std::sqrt(scale * (0.1 + rng.uniform01())) * rng.normal_matrix<double>(n, 1);
  return {symmetrize<double>(l * l.transpose()), l};
}

// Contraction with spectral norm <= radius, so G^{1/2} Xi has covariance below G.
MatrixXd random_contraction(Rng& rng, Eigen::Index rows, Eigen::Index cols, double radius) {
  MatrixXd xi = rng.normal_matrix<double>(rows, cols);
  Eigen::JacobiSVD<MatrixXd> svd(xi);
  const double smax = svd.singularValues().maxCoeff();
  if (smax > 0.0) xi *= radius / smax;
  return xi;
}

// Direct eigenvalue oracle for the inclusion.
bool inclusion_oracle(const InclusionInstance<double>& inst, double tol = 1e-9) {
  const MatrixXd fgf = symmetrize<double>(inst.F * inst.G * inst.F.transpose());
  const MatrixXd gap = symmetrize<double>(fgf - inst.E * inst.E.transpose());
  return min_eigenvalue<double>(gap) >= -tol * (1.0 + std::max(max_eigenvalue<double>(fgf), 0.0));
}

}  // namespace

TEST_SUITE("matfact") {
  TEST_CASE("zero bound forces zero factor") {
    InclusionInstance<double> inst;
    inst.E = MatrixXd::Zero(2, 2);
    Rng rng(7);
    inst.F = rng.normal_matrix<double>(2, 3);
    inst.G = MatrixXd::Zero(3, 3);
    CHECK(matfact::check_inclusion<double>(inst, 1e-9));
    const auto result = matfact::construct_factor<double>(inst);
    CHECK(result.D.isZero(0.0));
    CHECK(result.rank_G == 0);
  }

  TEST_CASE("identity case fails when the bound is too small") {
    InclusionInstance<double> inst;
    inst.E = MatrixXd::Identity(2, 2);
    inst.F = MatrixXd::Identity(2, 2);
    inst.G = 0.5 * MatrixXd::Identity(2, 2);
    CHECK_FALSE(matfact::check_inclusion<double>(inst, 1e-9));
  }

  TEST_CASE("identity F pins the factor to E") {
    Rng rng(11);
    InclusionInstance<double> inst;
    inst.F = MatrixXd::Identity(3, 3);
    inst.G = MatrixXd::Identity(3, 3);
    inst.E = random_contraction(rng, 3, 2, 0.9);
    REQUIRE(matfact::check_inclusion<double>(inst, 1e-9));
    const auto result = matfact::construct_factor<double>(inst);
    CHECK((result.D - inst.E).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("planted factor instances satisfy the inclusion and reconstruct") {
    Rng rng(23);
    InclusionInstance<double> inst;
    inst.F = rng.normal_matrix<double>(3, 2);
    const auto bound = random_psd_with_rank(rng, 2, 2);
    inst.G = bound.G;
    const MatrixXd d0 = bound.L * random_contraction(rng, 2, 2, 0.8);
    inst.E = inst.F * d0;
    CHECK(matfact::check_inclusion<double>(inst, 1e-9));
    CHECK(inclusion_oracle(inst));

    const auto result = matfact::construct_factor<double>(inst);
    CHECK((inst.F * result.D - inst.E).norm() <= 1e-8 * (1.0 + inst.E.norm()));
    const double gap = max_eigenvalue<double>(MatrixXd(result.D * result.D.transpose() - inst.G));
    CHECK(gap <= 1e-8 * (1.0 + std::max(max_eigenvalue<double>(inst.G), 0.0)));
  }

  TEST_CASE("wide instances reconstruct even when the factor differs from the plant") {
    Rng rng(41);
    InclusionInstance<double> inst;
    inst.F = rng.normal_matrix<double>(4, 3);
    const auto bound = random_psd_with_rank(rng, 3, 3, 2.0);
    inst.G = bound.G;
    const MatrixXd d0 = bound.L * random_contraction(rng, 3, 5, 1.0);
    inst.E = inst.F * d0;
    REQUIRE(matfact::check_inclusion<double>(inst, 1e-9));
    const auto result = matfact::construct_factor<double>(inst);
    CHECK(result.diagnostics.factor_residual <= 1e-8 * (1.0 + inst.E.norm()));
    CHECK(result.diagnostics.inclusion_gap <= 1e-8 * (1.0 + max_eigenvalue<double>(inst.G)));
  }

  TEST_CASE("violated inclusion raises with the offending residual") {
    InclusionInstance<double> inst;
    inst.E = MatrixXd::Identity(2, 2);
    inst.F = MatrixXd::Identity(2, 2);
    inst.G = 0.25 * MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS((void)matfact::construct_factor<double>(inst), InclusionViolation);
  }

  TEST_CASE("dimension mismatches are rejected") {
    InclusionInstance<double> inst;
    inst.E = MatrixXd::Zero(2, 2);
    inst.F = MatrixXd::Zero(3, 3);
    inst.G = MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS((void)matfact::check_inclusion<double>(inst, 1e-9), InvalidInput);
  }

  TEST_CASE("nonpositive tolerances are rejected") {
    InclusionInstance<double> inst;
    inst.E = MatrixXd::Zero(2, 2);
    inst.F = MatrixXd::Identity(2, 2);
    inst.G = MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS((void)matfact::check_inclusion<double>(inst, 0.0), InvalidInput);
  }

  TEST_CASE("row reduction produces a full-row-rank top block") {
    Rng rng(5);
    const MatrixXd m = rng.normal_matrix<double>(4, 2) * rng.normal_matrix<double>(2, 3);
    const auto [v, rank] = matfact::row_reduce<double>(m);
    CHECK(rank == 2);
    const MatrixXd reduced = v * m;
    CHECK(reduced.bottomRows(2).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(v.determinant()) > 1e-12);
  }

  TEST_CASE("equivalence with the inclusion oracle over random instances") {
    Rng rng(2024);
    int successes = 0;
    int failures = 0;
    for (int trial = 0; trial < 400; ++trial) {
      const Eigen::Index n1 = 1 + static_cast<Eigen::Index>(rng.raw() % 6);
      const Eigen::Index n2 = 1 + static_cast<Eigen::Index>(rng.raw() % 6);
      const Eigen::Index n3 = 1 + static_cast<Eigen::Index>(rng.raw() % 6);
      const Eigen::Index rank = static_cast<Eigen::Index>(rng.raw() % (n3 + 1));

      InclusionInstance<double> inst;
      inst.F = rng.normal_matrix<double>(n1, n3);
      const auto bound = random_psd_with_rank(rng, n3, rank);
      inst.G = bound.G;
      if (trial % 2 == 0) {
        const double radius = rng.uniform01();
        inst.E = (rank > 0) ? MatrixXd(inst.F * bound.L * random_contraction(rng, rank, n2, radius))
                            : MatrixXd::Zero(n1, n2);
      } else {
        inst.E = rng.normal_matrix<double>(n1, n2);
      }

      const bool holds = matfact::check_inclusion<double>(inst, 1e-9);
      bool constructed = false;
      try {
        const auto result = matfact::construct_factor<double>(inst);
        constructed = (inst.F * result.D - inst.E).norm() <= 1e-8 * (1.0 + inst.E.norm()) &&
                      max_eigenvalue<double>(MatrixXd(result.D * result.D.transpose() - inst.G)) <=
                          1e-8 * (1.0 + std::max(max_eigenvalue<double>(inst.G), 0.0));
      } catch (const InclusionViolation&) {
        constructed = false;
      } catch (const NumericalRankError&) {
        constructed = false;
      }
      CHECK(holds == constructed);
      (holds ? successes : failures)++;
    }
    // Both branches must actually be exercised.
    CHECK(successes > 50);
    CHECK(failures > 50);
  }

  TEST_CASE("internal projector is symmetric and idempotent") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::Index n1 = 2 + static_cast<Eigen::Index>(rng.raw() % 4);
      const Eigen::Index n3 = 2 + static_cast<Eigen::Index>(rng.raw() % 4);
      InclusionInstance<double> inst;
      inst.F = rng.normal_matrix<double>(n1, n3);
      const auto bound = random_psd_with_rank(rng, n3, n3);
      inst.G = bound.G;
      inst.E = inst.F * bound.L * random_contraction(rng, n3, 2, 0.7);
      const auto result = matfact::construct_factor<double>(inst);
      if (result.internals.reduced_top.size() == 0) continue;

      const Eigen::VectorXd lam = result.internals.kept_eigenvalues;
      const MatrixXd lam_sqrt = lam.cwiseSqrt().asDiagonal();
      const MatrixXd lam_inv_sqrt = lam.cwiseSqrt().cwiseInverse().asDiagonal();
      const MatrixXd w = lam_inv_sqrt * result.internals.right_inverse *
                         result.internals.reduced_top * lam_sqrt;
      CHECK((w * w - w).norm() <= 1e-8 * (1.0 + w.norm()));
      CHECK((w - w.transpose()).norm() <= 1e-8);
    }
  }

  TEST_CASE("all ranks of the bound succeed when the inclusion holds") {
    Rng rng(123);
    const Eigen::Index n3 = 4;
    for (Eigen::Index rank = 0; rank <= n3; ++rank) {
      InclusionInstance<double> inst;
      inst.F = rng.normal_matrix<double>(3, n3);
      const auto bound = random_psd_with_rank(rng, n3, rank);
      inst.G = bound.G;
      inst.E = (rank > 0) ? MatrixXd(inst.F * bound.L * random_contraction(rng, rank, 2, 0.9))
                          : MatrixXd::Zero(3, 2);
      REQUIRE(matfact::check_inclusion<double>(inst, 1e-9));
      const auto result = matfact::construct_factor<double>(inst);
      CHECK(result.rank_G == rank);
      CHECK(result.diagnostics.factor_residual <= 1e-8 * (1.0 + inst.E.norm()));
    }
  }

  TEST_CASE("float instantiation stays generic") {
    InclusionInstance<float> inst;
    inst.E = Eigen::MatrixXf::Zero(2, 2);
    inst.F = Eigen::MatrixXf::Identity(2, 2);
    inst.G = Eigen::MatrixXf::Identity(2, 2);
    CHECK(matfact::check_inclusion<float>(inst, 1e-5f));
    const auto result = matfact::construct_factor<float>(inst, 1e-6f, 1e-4f);
    CHECK((result.D - inst.E).cwiseAbs().maxCoeff() < 1e-5f);
  }
}
