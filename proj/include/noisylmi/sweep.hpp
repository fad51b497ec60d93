#pragma once

// The feasibility sweep: for every (horizon, bound) cell, generate seeded
// noisy experiments with per-signal bounds theta/3, run both synthesis
// programs, and tabulate feasibility counts. Cells and trials execute on a
// work pool; per-trial seeds derive from (base seed, T, bound index, trial)
// so the output is identical for any worker count.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "noisylmi/config.hpp"
#include "noisylmi/conset.hpp"
#include "noisylmi/parallel.hpp"
#include "noisylmi/random.hpp"
#include "noisylmi/simkit.hpp"
#include "noisylmi/synth.hpp"

namespace noisylmi::cli {

struct SweepCell {
  Eigen::Index horizon = 0;
  double theta = 0.0;
  int trials = 0;
  int n_feas_energy = 0;
  int n_feas_inst = 0;
  int n_infeas_energy = 0;
  int n_infeas_inst = 0;
  int n_error = 0;
};

struct SweepResult {
  std::vector<Eigen::Index> t_grid;
  std::vector<double> theta_grid;
  std::vector<SweepCell> cells;  // theta-major: cells[theta_index * |T| + T_index]

  const SweepCell& cell(std::size_t theta_index, std::size_t t_index) const {
    return cells[theta_index * t_grid.size() + t_index];
  }
};

inline SweepResult run_sweep(const RunConfig& config, int threads = 0) {
  if (!config.sweep) throw InvalidInput("configuration has no [sweep] section");
  const SweepConfig& sweep = *config.sweep;
  const Eigen::Index n = config.plant.n;
  const Eigen::Index m = config.plant.m;

  const simkit::PlantModel<double> fixed_plant = build_plant(config.plant);

  struct TrialOutcome {
    enum class Verdict { Feasible, Infeasible, Error };
    Verdict energy = Verdict::Error;
    Verdict inst = Verdict::Error;
    bool errored = false;
  };

  const std::size_t num_cells = sweep.T_grid.size() * sweep.theta_grid.size();
  const std::size_t num_trials = num_cells * static_cast<std::size_t>(sweep.trials);
  std::vector<TrialOutcome> outcomes(num_trials);

  parallel_for(
      num_trials,
      [&](std::size_t task) {
        const std::size_t cell_index = task / sweep.trials;
        const int trial = static_cast<int>(task % sweep.trials);
        const std::size_t theta_index = cell_index / sweep.T_grid.size();
        const std::size_t t_index = cell_index % sweep.T_grid.size();
        const Eigen::Index horizon = sweep.T_grid[t_index];
        const double theta = sweep.theta_grid[theta_index];

        TrialOutcome& out = outcomes[task];
        const std::uint64_t trial_seed =
            derive_seed({sweep.seed, static_cast<std::uint64_t>(horizon),
                         static_cast<std::uint64_t>(theta_index), static_cast<std::uint64_t>(trial)});
        try {
          const simkit::PlantModel<double> plant =
              sweep.redraw_plant
                  ? simkit::random_plant<double>(n, m, config.plant.spectral_radius,
                                                 derive_seed({trial_seed, 0x706cull}))
                  : fixed_plant;

          simkit::NoiseModel noise;
          noise.state_sq_bound = theta / 3.0;
          noise.input_sq_bound = theta / 3.0;
          noise.distribution = config.noise.distribution;
          Eigen::VectorXd x0 = config.experiment.x0.size() == n ? config.experiment.x0
                                                                : Eigen::VectorXd::Zero(n);
          const auto traj = simkit::simulate_experiment<double>(
              plant, x0, config.experiment.input_amplitude, horizon, noise, trial_seed);
          const auto data = conset::assemble<double>(traj);

          sdp::SolveSettings<double> settings;
          settings.feas_tol = config.solver.feas_tol;
          settings.margin = config.solver.margin;
          settings.max_iter = config.solver.max_iter;
          settings.seed = trial_seed;

          // Energy program on the raw quadratic coefficients: when the
          // signal-to-noise assumption fails, the constant block makes the
          // program infeasible outright, which the solver reports itself.
          conset::EnergyBound<double> bound;
          bound.n = n;
          bound.m = m;
          bound.Theta = static_cast<double>(horizon) * theta *
                        Eigen::MatrixXd::Identity(2 * n + m, 2 * n + m);
          const auto quadratic = conset::consistency_quadratic<double>(data, bound);
          const auto energy_outcome =
              sdp::solve_feasibility<double>(synth::build_energy_lmi<double>(quadratic, n, m), settings);

          const auto inst_outcome = sdp::solve_feasibility<double>(
              synth::build_inst_lmi<double>(data, conset::InstantaneousBound<double>{theta}), settings);

          auto classify = [](sdp::SolveStatus s) {
            switch (s) {
              case sdp::SolveStatus::Feasible: return TrialOutcome::Verdict::Feasible;
              case sdp::SolveStatus::Infeasible: return TrialOutcome::Verdict::Infeasible;
              default: return TrialOutcome::Verdict::Error;
            }
          };
          out.energy = classify(energy_outcome.status);
          out.inst = classify(inst_outcome.status);
          out.errored = (out.energy == TrialOutcome::Verdict::Error) ||
                        (out.inst == TrialOutcome::Verdict::Error);
        } catch (const std::exception&) {
          out.errored = true;
        }
      },
      threads);

  SweepResult result;
  result.t_grid = sweep.T_grid;
  result.theta_grid = sweep.theta_grid;
  result.cells.resize(num_cells);
  for (std::size_t cell_index = 0; cell_index < num_cells; ++cell_index) {
    SweepCell& cell = result.cells[cell_index];
    cell.horizon = sweep.T_grid[cell_index % sweep.T_grid.size()];
    cell.theta = sweep.theta_grid[cell_index / sweep.T_grid.size()];
    cell.trials = sweep.trials;
    for (int trial = 0; trial < sweep.trials; ++trial) {
      const TrialOutcome& out = outcomes[cell_index * sweep.trials + trial];
      if (out.errored) {
        ++cell.n_error;  // the trial counts toward neither program
        continue;
      }
      (out.energy == TrialOutcome::Verdict::Feasible ? cell.n_feas_energy : cell.n_infeas_energy)++;
      (out.inst == TrialOutcome::Verdict::Feasible ? cell.n_feas_inst : cell.n_infeas_inst)++;
    }
  }
  return result;
}

inline std::string sweep_csv_header() {
  return "T,theta,trials,n_feas_energy,n_feas_inst,ratio_energy,ratio_inst,n_error";
}

/// One row per cell, horizon-major then bound, theta in scientific notation,
/// ratios over the non-errored trials with three decimals.
inline std::string write_sweep_csv(const SweepResult& result) {
  std::ostringstream os;
  os << sweep_csv_header() << "\n";
  for (std::size_t t_index = 0; t_index < result.t_grid.size(); ++t_index) {
    for (std::size_t theta_index = 0; theta_index < result.theta_grid.size(); ++theta_index) {
      const SweepCell& cell = result.cell(theta_index, t_index);
      const int counted = cell.trials - cell.n_error;
      const double ratio_energy = counted > 0 ? static_cast<double>(cell.n_feas_energy) / counted : 0.0;
      const double ratio_inst = counted > 0 ? static_cast<double>(cell.n_feas_inst) / counted : 0.0;
      char line[160];
      std::snprintf(line, sizeof(line), "%lld,%.6e,%d,%d,%d,%.3f,%.3f,%d\n",
                    static_cast<long long>(cell.horizon), cell.theta, cell.trials,
                    cell.n_feas_energy, cell.n_feas_inst, ratio_energy, ratio_inst, cell.n_error);
      os << line;
    }
  }
  return os.str();
}

}  // namespace noisylmi::cli
