#pragma once

// Command-line front end: simulate | synth | verify | sweep. Kept header-only
// and callable in-process so the test suite can drive whole workflows and
// compare emitted files byte for byte.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noisylmi/config.hpp"
#include "noisylmi/conset.hpp"
#include "noisylmi/runrecord.hpp"
#include "noisylmi/simkit.hpp"
#include "noisylmi/svg.hpp"
#include "noisylmi/sweep.hpp"
#include "noisylmi/synth.hpp"

namespace noisylmi::cli {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write file: " + path);
  out << content;
}

/// Trajectory CSV: k, the measured inputs, then the measured states. The
/// final row carries only the terminal state, with empty input cells.
inline std::string write_trajectory_csv(const simkit::MeasuredTrajectory<double>& traj) {
  std::ostringstream os;
  os << "k";
  for (Eigen::Index j = 0; j < traj.input_dim(); ++j) os << ",u_m_" << (j + 1);
  for (Eigen::Index j = 0; j < traj.state_dim(); ++j) os << ",x_m_" << (j + 1);
  os << "\n";
  for (Eigen::Index k = 0; k <= traj.horizon(); ++k) {
    os << k;
    for (Eigen::Index j = 0; j < traj.input_dim(); ++j) {
      os << ",";
      if (k < traj.horizon()) os << format_full(traj.input_measured(j, k));
    }
    for (Eigen::Index j = 0; j < traj.state_dim(); ++j)
      os << "," << format_full(traj.state_measured(j, k));
    os << "\n";
  }
  return os.str();
}

inline simkit::MeasuredTrajectory<double> read_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trajectory file", 1);
  // Header determines the dimensions.
  Eigen::Index m = 0, n = 0;
  {
    std::istringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (trim(cell) != "k") throw ParseError("trajectory header must start with k", 1);
    while (std::getline(hs, cell, ',')) {
      cell = trim(cell);
      if (cell.rfind("u_m_", 0) == 0)
        ++m;
      else if (cell.rfind("x_m_", 0) == 0)
        ++n;
      else
        throw ParseError("unexpected trajectory column: " + cell, 1);
    }
  }
  if (n == 0) throw ParseError("trajectory file has no state columns", 1);
  std::vector<std::vector<std::string>> rows;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    // A trailing empty cell is not produced by getline; pad for short rows.
    while (cells.size() < static_cast<std::size_t>(1 + m + n)) cells.push_back("");
    if (cells.size() != static_cast<std::size_t>(1 + m + n))
      throw ParseError("wrong trajectory column count", line_number);
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw ParseError("trajectory must contain at least two rows", line_number);
  const Eigen::Index horizon = static_cast<Eigen::Index>(rows.size()) - 1;

  simkit::MeasuredTrajectory<double> traj;
  traj.input_measured.resize(m, horizon);
  traj.state_measured.resize(n, horizon + 1);
  for (Eigen::Index k = 0; k <= horizon; ++k) {
    const auto& cells = rows[k];
    try {
      if (std::stoll(cells[0]) != k) throw std::invalid_argument("");
    } catch (...) {
      throw ParseError("trajectory rows must be consecutive from 0", static_cast<int>(k) + 2);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::string& cell = cells[1 + j];
      if (k < horizon) {
        try {
          traj.input_measured(j, k) = std::stod(cell);
        } catch (...) {
          throw ParseError("invalid input value: " + cell, static_cast<int>(k) + 2);
        }
      } else if (!cell.empty()) {
        throw ParseError("terminal row must leave input cells empty", static_cast<int>(k) + 2);
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::string& cell = cells[1 + m + j];
      try {
        traj.state_measured(j, k) = std::stod(cell);
      } catch (...) {
        throw ParseError("invalid state value: " + cell, static_cast<int>(k) + 2);
      }
    }
  }
  return traj;
}

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<double> margin_override;
  std::optional<Eigen::Index> samples_override;
  std::optional<std::string> out_override;
};

inline RunConfig load_config(const CommandOptions& opts) {
  RunConfig cfg = RunConfig::from_file_text(read_text_file(opts.config_path));
  if (opts.seed_override) {
    cfg.experiment.seed = *opts.seed_override;
    if (cfg.sweep) cfg.sweep->seed = *opts.seed_override;
  }
  if (opts.margin_override) cfg.solver.margin = *opts.margin_override;
  if (opts.samples_override) cfg.verify.samples = *opts.samples_override;
  if (opts.out_override) cfg.output_dir = *opts.out_override;
  return cfg;
}

inline int cmd_simulate(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = load_config(opts);
  const auto plant = build_plant(cfg.plant);
  simkit::NoiseModel noise{cfg.noise.e_x_bound, cfg.noise.e_u_bound, cfg.noise.distribution};
  const Eigen::VectorXd x0 =
      cfg.experiment.x0.size() > 0 ? cfg.experiment.x0 : Eigen::VectorXd::Zero(cfg.plant.n);
  const auto traj = simkit::simulate_experiment<double>(
      plant, x0, cfg.experiment.input_amplitude, cfg.experiment.horizon, noise, cfg.experiment.seed);
  const std::string path = cfg.output_dir + "/trajectory.csv";
  write_text_file(path, write_trajectory_csv(traj));
  log << "wrote " << path << " (T=" << traj.horizon() << ", n=" << traj.state_dim()
      << ", m=" << traj.input_dim() << ")\n";
  return 0;
}

namespace detail {

inline VerificationRecord verify_energy_workflow(const conset::EnergyConsistencySet<double>& set,
                                                 const synth::SynthesisCertificate<double>& cert,
                                                 const Eigen::MatrixXd& plant_a,
                                                 const Eigen::MatrixXd& plant_b,
                                                 const VerifyConfig& verify) {
  VerificationRecord rec;
  rec.ran = true;
  synth::MultiplierSearchReport<double> search;
  rec.multiplier_search_pass = synth::verify_energy_certificate<double>(set, cert.K, cert.P, 0.0, &search);
  rec.best_multiplier = search.best_multiplier;
  rec.min_lambda_max = search.min_lambda_max;
  rec.sampling = synth::verify_by_sampling<double>(set, cert.K, cert.P, verify.samples, verify.seed);
  rec.closed_loop_rho = spectral_radius<double>(Eigen::MatrixXd(plant_a + plant_b * cert.K));
  rec.pass = rec.multiplier_search_pass && rec.sampling.pass();
  return rec;
}

inline VerificationRecord verify_inst_workflow(const conset::DataMatrices<double>& data, double theta,
                                               const synth::SynthesisCertificate<double>& cert,
                                               const Eigen::MatrixXd& plant_a,
                                               const Eigen::MatrixXd& plant_b,
                                               const VerifyConfig& verify) {
  VerificationRecord rec;
  rec.ran = true;
  conset::InstantaneousBound<double> bound{theta};
  rec.necessary_pass =
      synth::verify_inst_necessary<double>(cert.taus, data, bound, 0.0, &rec.necessary_lambda_min);
  rec.sampling =
      synth::verify_by_sampling<double>(data, bound, cert.K, cert.P, verify.samples, verify.seed);
  rec.closed_loop_rho = spectral_radius<double>(Eigen::MatrixXd(plant_a + plant_b * cert.K));
  // A starved sampler reports what it checked; the verdict then rests on the
  // necessary condition and whatever members were reached.
  const bool sampling_ok = rec.sampling.checked == 0 ? true : rec.sampling.pass();
  rec.pass = rec.necessary_pass && sampling_ok;
  return rec;
}

inline CertificateRecord make_certificate_record(const sdp::SolveOutcome<double>& outcome,
                                                 std::optional<synth::SynthesisCertificate<double>> cert) {
  CertificateRecord rec;
  rec.status = outcome.status;
  rec.certificate = std::move(cert);
  rec.solver_iterations = outcome.diagnostics.newton_iterations;
  rec.solver_wall_seconds = outcome.diagnostics.wall_seconds;
  rec.solver_message = outcome.diagnostics.message;
  return rec;
}

}  // namespace detail

inline int cmd_synth(const CommandOptions& opts, std::ostream& log) {
  const auto t_start = std::chrono::steady_clock::now();
  const RunConfig cfg = load_config(opts);
  const auto plant = build_plant(cfg.plant);
  simkit::NoiseModel noise{cfg.noise.e_x_bound, cfg.noise.e_u_bound, cfg.noise.distribution};
  const Eigen::VectorXd x0 =
      cfg.experiment.x0.size() > 0 ? cfg.experiment.x0 : Eigen::VectorXd::Zero(cfg.plant.n);

  RunRecord rec;
  rec.config = cfg;
  rec.plant_A = plant.A;
  rec.plant_B = plant.B;
  log << "plant: n=" << cfg.plant.n << ", m=" << cfg.plant.m
      << ", controllability rank " << plant.controllability_rank() << "\n";

  const auto traj = simkit::simulate_experiment<double>(
      plant, x0, cfg.experiment.input_amplitude, cfg.experiment.horizon, noise, cfg.experiment.seed);
  rec.data = conset::assemble<double>(traj);
  rec.theta = noise.stacked_sq_bound();
  rec.theta_factor = static_cast<double>(cfg.experiment.horizon) * rec.theta;

  sdp::SolveSettings<double> settings;
  settings.feas_tol = cfg.solver.feas_tol;
  settings.margin = cfg.solver.margin;
  settings.max_iter = cfg.solver.max_iter;
  settings.seed = cfg.experiment.seed;

  const bool want_energy = cfg.mode != BoundMode::Instantaneous;
  const bool want_inst = cfg.mode != BoundMode::Energy;
  int verified = 0;
  int infeasible = 0;
  int failures = 0;

  if (want_energy) {
    const auto bound = conset::inst_to_energy<double>(cfg.noise.e_x_bound, cfg.noise.e_u_bound,
                                                      cfg.experiment.horizon, cfg.plant.n, cfg.plant.m);
    // Assumption failures surface here as a distinct error.
    const auto set = conset::build_energy_set<double>(rec.data, bound);
    auto [outcome, cert] = synth::synthesize_energy<double>(set, settings);
    rec.energy = detail::make_certificate_record(outcome, cert);
    log << "energy program: " << sdp::to_string(outcome.status) << "\n";
    if (outcome.feasible()) {
      auto verification = detail::verify_energy_workflow(set, *cert, plant.A, plant.B, cfg.verify);
      log << "  multiplier search: " << (verification.multiplier_search_pass ? "pass" : "fail")
          << ", sampling worst rho: " << format_full(verification.sampling.worst_spectral_radius)
          << ", closed-loop rho: " << format_full(verification.closed_loop_rho) << "\n";
      if (verification.pass) ++verified;
      rec.energy_verification = std::move(verification);
      write_text_file(cfg.output_dir + "/closed_loop_energy.svg",
                      render_trajectory_plot("closed loop, energy-bound gain",
                                             simkit::simulate_closed_loop<double>(
                                                 plant, cert->K, Eigen::VectorXd::Ones(cfg.plant.n), 40)));
    } else if (outcome.status == sdp::SolveStatus::Infeasible) {
      ++infeasible;
    } else {
      ++failures;
      log << "  solver failure: " << outcome.diagnostics.message << "\n";
    }
  }
  if (want_inst) {
    conset::InstantaneousBound<double> bound{rec.theta};
    auto [outcome, cert] = synth::synthesize_inst<double>(rec.data, bound, settings);
    rec.instantaneous = detail::make_certificate_record(outcome, cert);
    log << "instantaneous program: " << sdp::to_string(outcome.status) << "\n";
    if (outcome.feasible()) {
      auto verification =
          detail::verify_inst_workflow(rec.data, rec.theta, *cert, plant.A, plant.B, cfg.verify);
      log << "  necessary condition: " << (verification.necessary_pass ? "pass" : "fail")
          << ", sampling checked: " << verification.sampling.checked
          << (verification.sampling.starved ? " (starved)" : "")
          << ", closed-loop rho: " << format_full(verification.closed_loop_rho) << "\n";
      if (verification.pass) ++verified;
      rec.inst_verification = std::move(verification);
      write_text_file(cfg.output_dir + "/closed_loop_instantaneous.svg",
                      render_trajectory_plot("closed loop, instantaneous-bound gain",
                                             simkit::simulate_closed_loop<double>(
                                                 plant, cert->K, Eigen::VectorXd::Ones(cfg.plant.n), 40)));
    } else if (outcome.status == sdp::SolveStatus::Infeasible) {
      ++infeasible;
    } else {
      ++failures;
      log << "  solver failure: " << outcome.diagnostics.message << "\n";
    }
  }

  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  const std::string record_path = cfg.output_dir + "/run_record.txt";
  write_text_file(record_path, write_run_record(rec, "synth"));
  log << "wrote " << record_path << "\n";

  if (verified > 0) return 0;
  if (failures > 0) return 1;
  if (infeasible > 0) return 2;
  return 1;  // nothing requested or nothing verified
}

inline int cmd_verify(const CommandOptions& opts, std::ostream& log) {
  const RunRecord rec = read_run_record(read_text_file(opts.config_path));
  VerifyConfig verify = rec.config.verify;
  if (opts.samples_override) verify.samples = *opts.samples_override;
  if (opts.seed_override) verify.seed = *opts.seed_override;

  bool all_pass = true;
  bool any = false;
  if (rec.energy && rec.energy->certificate) {
    any = true;
    conset::EnergyBound<double> bound;
    bound.n = rec.data.state_dim();
    bound.m = rec.data.input_dim();
    const Eigen::Index dim = 2 * bound.n + bound.m;
    bound.Theta = rec.theta_factor * Eigen::MatrixXd::Identity(dim, dim);
    const auto set = conset::build_energy_set<double>(rec.data, bound);
    const auto verification = detail::verify_energy_workflow(set, *rec.energy->certificate,
                                                             rec.plant_A, rec.plant_B, verify);
    log << "energy certificate: multiplier search "
        << (verification.multiplier_search_pass ? "pass" : "fail") << ", sampling "
        << (verification.sampling.pass() ? "pass" : "fail") << " (worst lyapunov gap "
        << format_full(verification.sampling.worst_lyapunov_gap) << ")\n";
    all_pass = all_pass && verification.pass;
  }
  if (rec.instantaneous && rec.instantaneous->certificate) {
    any = true;
    const auto verification = detail::verify_inst_workflow(
        rec.data, rec.theta, *rec.instantaneous->certificate, rec.plant_A, rec.plant_B, verify);
    log << "instantaneous certificate: necessary condition "
        << (verification.necessary_pass ? "pass" : "fail") << ", sampling checked "
        << verification.sampling.checked << (verification.sampling.starved ? " (starved)" : "")
        << (verification.sampling.checked > 0
                ? ", worst lyapunov gap " + format_full(verification.sampling.worst_lyapunov_gap)
                : std::string())
        << "\n";
    all_pass = all_pass && verification.pass;
  }
  if (!any) {
    log << "record carries no certificates to verify\n";
    return 2;
  }
  log << (all_pass ? "verification passed" : "verification FAILED") << "\n";
  return all_pass ? 0 : 2;
}

inline int cmd_sweep(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = load_config(opts);
  if (!cfg.sweep) throw InvalidInput("configuration has no [sweep] section");
  const SweepResult result = run_sweep(cfg);

  const std::string csv_path = cfg.output_dir + "/sweep.csv";
  write_text_file(csv_path, write_sweep_csv(result));

  auto ratios = [&](bool energy) {
    std::vector<std::vector<double>> grid(result.theta_grid.size());
    for (std::size_t ti = 0; ti < result.theta_grid.size(); ++ti) {
      grid[ti].resize(result.t_grid.size());
      for (std::size_t tj = 0; tj < result.t_grid.size(); ++tj) {
        const SweepCell& cell = result.cell(ti, tj);
        const int counted = cell.trials - cell.n_error;
        const int feas = energy ? cell.n_feas_energy : cell.n_feas_inst;
        grid[ti][tj] = counted > 0 ? static_cast<double>(feas) / counted : 0.0;
      }
    }
    return grid;
  };
  write_text_file(cfg.output_dir + "/heatmap_energy.svg",
                  render_heatmap("feasibility ratio, energy-bound program", result.t_grid,
                                 result.theta_grid, ratios(true)));
  write_text_file(cfg.output_dir + "/heatmap_instantaneous.svg",
                  render_heatmap("feasibility ratio, instantaneous-bound program", result.t_grid,
                                 result.theta_grid, ratios(false)));
  log << "wrote " << csv_path << " plus two heatmaps ("
      << result.t_grid.size() * result.theta_grid.size() << " cells)\n";
  return 0;
}

/// Runs one subcommand with the same error-to-exit-code mapping the binary
/// uses: 0 success, 2 infeasible / verification failure, 1 any error.
inline int dispatch(const std::string& command, const CommandOptions& opts, std::ostream& log,
                    std::ostream& err) {
  try {
    if (command == "simulate") return cmd_simulate(opts, log);
    if (command == "synth") return cmd_synth(opts, log);
    if (command == "verify") return cmd_verify(opts, log);
    if (command == "sweep") return cmd_sweep(opts, log);
    err << "error: unknown command " << command << "\n";
    return 1;
  } catch (const AssumptionViolation& e) {
    err << "error: " << e.what() << "\n"
        << "the data Gram does not dominate the noise block; collect more or richer data,\n"
        << "or lower the postulated error bounds\n";
    return 1;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace noisylmi::cli
