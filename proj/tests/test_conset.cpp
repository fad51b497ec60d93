#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "noisylmi/conset.hpp"
#include "noisylmi/linalg.hpp"
#include "noisylmi/matfact.hpp"
#include "noisylmi/simkit.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace noisylmi;
using conset::DataMatrices;
using conset::EnergyBound;
using conset::InstantaneousBound;
using simkit::NoiseModel;
using simkit::PlantModel;

namespace {

PlantModel<double> plant_3x2(std::uint64_t seed = 19) {
  return simkit::random_plant<double>(3, 2, 0.85, seed);
}

struct Instance {
  PlantModel<double> plant;
  simkit::MeasuredTrajectory<double> traj;
  DataMatrices<double> data;
  NoiseModel noise;
};

Instance make_instance(std::uint64_t seed, Eigen::Index horizon = 40, double e_bound = 1e-4) {
  Instance inst{plant_3x2(seed), {}, {}, {}};
  inst.noise.state_sq_bound = e_bound;
  inst.noise.input_sq_bound = e_bound;
  inst.traj = simkit::simulate_experiment<double>(inst.plant, VectorXd::Zero(3), 1.0, horizon,
                                                  inst.noise, seed + 1000);
  inst.data = conset::assemble<double>(inst.traj);
  return inst;
}

MatrixXd true_params(const PlantModel<double>& plant) {
  MatrixXd z(plant.state_dim(), plant.state_dim() + plant.input_dim());
  z << plant.A, plant.B;
  return z;
}

// Raw quadratic form of the consistency condition, evaluated directly from
// the coefficients; the independent route for the ellipsoid-form membership.
bool membership_raw_quadratic(const conset::EnergyConsistencySet<double>& set, const MatrixXd& z,
                              double tol = 1e-8) {
  const MatrixXd q = z * set.quad * z.transpose() + z * set.cross.transpose() +
                     set.cross * z.transpose() + set.offset;
  const double scale = 1.0 + std::max(max_eigenvalue<double>(set.spread), 0.0);
  return max_eigenvalue<double>(MatrixXd(symmetrize<double>(q))) <= tol * scale;
}

}  // namespace

TEST_SUITE("conset") {
  TEST_CASE("assemble slices the trajectory into shifted views") {
    const auto inst = make_instance(1, 1);
    CHECK(inst.data.X1.cols() == 1);
    CHECK(inst.data.X0.cols() == 1);
    CHECK(inst.data.U0.cols() == 1);
    CHECK((inst.data.X0.col(0) - inst.traj.state_measured.col(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((inst.data.X1.col(0) - inst.traj.state_measured.col(1)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("zero-noise data satisfies the exact equations") {
    auto inst = make_instance(2, 30, 0.0);
    const MatrixXd truth = true_params(inst.plant);
    const MatrixXd residual = inst.data.X1 - truth * inst.data.regressor();
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("residual columns reproduce the stacked-error mapping") {
    auto inst = make_instance(3, 25);
    const MatrixXd truth = true_params(inst.plant);
    const MatrixXd residual = inst.data.X1 - truth * inst.data.regressor();
    // Each column must equal [I -A -B] eps(k), recomputed from hidden errors.
    const Eigen::Index n = 3, m = 2;
    MatrixXd j(n, 2 * n + m);
    j << MatrixXd::Identity(n, n), -inst.plant.A, -inst.plant.B;
    for (Eigen::Index k = 0; k < inst.data.horizon(); ++k) {
      const VectorXd expected = j * inst.traj.stacked_error(k);
      CHECK((residual.col(k) - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("instantaneous-to-energy conversion") {
    SUBCASE("reference-scale values give 0.03 I over dimension 17") {
      const auto bound = conset::inst_to_energy<double>(5e-5, 5e-5, 200, 7, 3);
      CHECK(bound.Theta.rows() == 17);
      CHECK((bound.Theta - 0.03 * MatrixXd::Identity(17, 17)).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("zero bounds give the zero matrix") {
      const auto bound = conset::inst_to_energy<double>(0.0, 0.0, 10, 2, 1);
      CHECK(bound.Theta.isZero(0.0));
    }
    SUBCASE("direct formula") {
      const auto bound = conset::inst_to_energy<double>(1.0, 0.0, 2, 2, 1);
      CHECK((bound.Theta - 4.0 * MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  TEST_CASE("noise-free energy set degenerates to the identified plant") {
    auto inst = make_instance(4, 30, 0.0);
    const auto bound = conset::inst_to_energy<double>(0.0, 0.0, 30, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    const MatrixXd truth = true_params(inst.plant);
    CHECK((set.center - truth).norm() <= 1e-8 * truth.norm());
    CHECK(max_eigenvalue<double>(set.spread) <= 1e-10);
  }

  TEST_CASE("short horizons violate the signal-to-noise assumption") {
    // T=3 < n+m=5 forces a rank-deficient regressor Gram.
    auto inst = make_instance(5, 3);
    const auto bound = conset::inst_to_energy<double>(1e-4, 1e-4, 3, 3, 2);
    CHECK_THROWS_AS((void)conset::build_energy_set<double>(inst.data, bound), AssumptionViolation);
  }

  TEST_CASE("seeded noisy runs keep the spread positive semidefinite") {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
      auto inst = make_instance(seed, 60);
      const auto bound = conset::inst_to_energy<double>(inst.noise.state_sq_bound,
                                                        inst.noise.input_sq_bound, 60, 3, 2);
      const auto set = conset::build_energy_set<double>(inst.data, bound);
      CHECK(min_eigenvalue<double>(set.spread) >= -1e-8 * (1.0 + max_eigenvalue<double>(set.spread)));
    }
  }

  TEST_CASE("energy membership") {
    auto inst = make_instance(6, 50);
    const auto bound = conset::inst_to_energy<double>(1e-4, 1e-4, 50, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);

    SUBCASE("the center always belongs") {
      CHECK(conset::membership_energy<double>(set, set.center));
    }
    SUBCASE("the generating plant always belongs") {
      CHECK(conset::membership_energy<double>(set, true_params(inst.plant)));
    }
    SUBCASE("inflating past the boundary leaves the set") {
      REQUIRE(min_eigenvalue<double>(set.spread) > 0.0);
      // Orthonormal-row contraction at 1.01 of the boundary radius.
      MatrixXd upsilon = MatrixXd::Zero(3, 5);
      upsilon.leftCols(3) = MatrixXd::Identity(3, 3);
      const MatrixXd z = set.center + 1.01 * set.spread_sqrt * upsilon * set.quad_inv_sqrt;
      CHECK_FALSE(conset::membership_energy<double>(set, z));
      // Direct quadratic-form oracle agrees.
      const MatrixXd delta = z - set.center;
      const MatrixXd gap = set.spread - delta * set.quad * delta.transpose();
      CHECK(min_eigenvalue<double>(gap) < 0.0);
    }
  }

  TEST_CASE("sampling stays inside the set") {
    auto inst = make_instance(7, 50);
    const auto bound = conset::inst_to_energy<double>(1e-4, 1e-4, 50, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    for (std::uint64_t i = 0; i < 500; ++i) {
      const auto mode = (i % 2 == 0) ? conset::SampleMode::Interior : conset::SampleMode::Boundary;
      const MatrixXd z = conset::sample_energy<double>(set, mode, derive_seed({70, i}));
      CHECK(conset::membership_energy<double>(set, z));
      // Boundedness: ||Z - center|| <= ||spread^{1/2}|| ||quad^{-1/2}||.
      const double radius = set.spread_sqrt.operatorNorm() * set.quad_inv_sqrt.operatorNorm();
      CHECK((z - set.center).operatorNorm() <= radius * (1.0 + 1e-12));
    }
  }

  TEST_CASE("contraction parameterization") {
    auto inst = make_instance(20, 40);
    const auto bound = conset::inst_to_energy<double>(1e-4, 1e-4, 40, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    SUBCASE("the zero contraction maps to the center") {
      const MatrixXd z = conset::member_from_contraction<double>(set, MatrixXd::Zero(3, 5));
      CHECK((z - set.center).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("orthonormal-row contractions land on members") {
      MatrixXd upsilon = MatrixXd::Zero(3, 5);
      upsilon.leftCols(3) = MatrixXd::Identity(3, 3);
      CHECK(conset::membership_energy<double>(
          set, conset::member_from_contraction<double>(set, upsilon)));
    }
  }

  TEST_CASE("general non-diagonal bounds work end to end") {
    // The tightest honest energy bound: the hidden error outer product plus
    // a small inflation. It is dense and has nonzero off-diagonal blocks.
    auto inst = make_instance(21, 45);
    const MatrixXd errors = inst.traj.stacked_error_matrix();
    conset::EnergyBound<double> bound;
    bound.n = 3;
    bound.m = 2;
    bound.Theta = symmetrize<double>(MatrixXd(errors * errors.transpose())) +
                  1e-10 * MatrixXd::Identity(8, 8);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    CHECK(conset::membership_energy<double>(set, true_params(inst.plant)));
    CHECK(min_eigenvalue<double>(set.spread) >= -1e-8 * (1.0 + max_eigenvalue<double>(set.spread)));
    // Partition accessors reassemble the dense bound exactly.
    MatrixXd reassembled(8, 8);
    reassembled << bound.block11(), bound.block12(), bound.block12().transpose(), bound.block22();
    CHECK((reassembled - bound.Theta).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("degenerate spread collapses sampling to the center") {
    auto inst = make_instance(8, 30, 0.0);
    const auto bound = conset::inst_to_energy<double>(0.0, 0.0, 30, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    for (std::uint64_t i = 0; i < 10; ++i) {
      const MatrixXd z = conset::sample_energy<double>(set, conset::SampleMode::Boundary, i);
      CHECK((z - set.center).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("instantaneous membership") {
    auto inst = make_instance(9, 40);
    InstantaneousBound<double> bound{inst.noise.stacked_sq_bound()};

    SUBCASE("the generating plant belongs under the honest bound") {
      CHECK(conset::membership_inst<double>(inst.data, bound, true_params(inst.plant)));
    }
    SUBCASE("exact solutions belong at zero bound") {
      auto clean = make_instance(10, 40, 0.0);
      CHECK(conset::membership_inst<double>(clean.data, InstantaneousBound<double>{0.0},
                                            true_params(clean.plant)));
    }
    SUBCASE("a single violated step rejects the candidate") {
      auto clean = make_instance(11, 40, 0.0);
      // Perturb so the residual breaks the envelope at some step.
      MatrixXd z = true_params(clean.plant);
      z(0, 0) += 0.35;
      InstantaneousBound<double> tiny{1e-6};
      // Per-step oracle: count violating steps by the scalar residual check.
      const MatrixXd residuals = clean.data.X1 - z * clean.data.regressor();
      const auto a = z.leftCols(3);
      const auto b = z.rightCols(2);
      const MatrixXd envelope =
          tiny.theta * (MatrixXd::Identity(3, 3) + a * a.transpose() + b * b.transpose());
      int violating = 0;
      for (Eigen::Index k = 0; k < clean.data.horizon(); ++k) {
        const VectorXd r = residuals.col(k);
        if (max_eigenvalue<double>(MatrixXd(r * r.transpose() - envelope)) > 1e-8) ++violating;
      }
      REQUIRE(violating >= 1);
      CHECK_FALSE(conset::membership_inst<double>(clean.data, tiny, z));
    }
  }

  TEST_CASE("instantaneous members nest inside the converted energy set") {
    auto inst = make_instance(12, 30);
    const double theta = inst.noise.stacked_sq_bound();
    InstantaneousBound<double> inst_bound{theta};
    const auto energy_bound = conset::inst_to_energy<double>(
        inst.noise.state_sq_bound, inst.noise.input_sq_bound, 30, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, energy_bound);

    const MatrixXd truth = true_params(inst.plant);
    Rng rng(55);
    int inside_inst = 0;
    for (int i = 0; i < 4000 && inside_inst < 100; ++i) {
      // Perturbations of the truth at the noise scale keep a healthy yield.
      const MatrixXd z = truth + 0.02 * rng.uniform01() * rng.normal_matrix<double>(3, 5);
      if (!conset::membership_inst<double>(inst.data, inst_bound, z)) continue;
      ++inside_inst;
      CHECK(conset::membership_energy<double>(set, z));
    }
    CHECK(inside_inst >= 100);
  }

  TEST_CASE("ellipsoid and raw-quadratic membership routes agree") {
    auto inst = make_instance(13, 45);
    const auto bound = conset::inst_to_energy<double>(1e-4, 1e-4, 45, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    Rng rng(77);
    int agreements = 0;
    for (int i = 0; i < 1000; ++i) {
      // Mix of interior samples and inflations so both verdicts appear.
      MatrixXd z = conset::sample_energy<double>(set, conset::SampleMode::Interior,
                                                 derive_seed({9, (std::uint64_t)i}));
      if (i % 3 == 1) z = set.center + 1.5 * (z - set.center) + 0.001 * rng.normal_matrix<double>(3, 5);
      const bool via_ellipsoid = conset::membership_energy<double>(set, z);
      const bool via_quadratic = membership_raw_quadratic(set, z);
      if (via_ellipsoid == via_quadratic) ++agreements;
    }
    CHECK(agreements == 1000);
  }

  TEST_CASE("members satisfy the matrix-elimination inclusion on raw data") {
    auto inst = make_instance(14, 35);
    const auto bound = conset::inst_to_energy<double>(1e-4, 1e-4, 35, 3, 2);
    const auto set = conset::build_energy_set<double>(inst.data, bound);
    for (std::uint64_t i = 0; i < 25; ++i) {
      const MatrixXd z = conset::sample_energy<double>(set, conset::SampleMode::Interior, i * 3 + 1);
      matfact::InclusionInstance<double> incl;
      incl.E = inst.data.X1 - z * inst.data.regressor();
      incl.F.resize(3, 8);
      incl.F << MatrixXd::Identity(3, 3), -z.leftCols(3), -z.rightCols(2);
      incl.G = bound.Theta;
      CHECK(matfact::check_inclusion<double>(incl, 1e-7));
    }
  }

  TEST_CASE("bound partition blocks reassemble") {
    const auto bound = conset::inst_to_energy<double>(2e-4, 1e-4, 10, 3, 2);
    MatrixXd reassembled(8, 8);
    reassembled << bound.block11(), bound.block12(), bound.block12().transpose(), bound.block22();
    CHECK((reassembled - bound.Theta).cwiseAbs().maxCoeff() == 0.0);
  }
}
