#pragma once

// Run-record file: a structured-text snapshot of one synthesis run with
// enough content (measured data, bounds, certificates) to replay every
// verifier without the original plant or RNG state. Matrices are written at
// full precision so the replay is exact.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>

#include "noisylmi/config.hpp"
#include "noisylmi/conset.hpp"
#include "noisylmi/errors.hpp"
#include "noisylmi/sdp.hpp"
#include "noisylmi/synth.hpp"

namespace noisylmi::cli {

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct CertificateRecord {
  sdp::SolveStatus status = sdp::SolveStatus::NumericalFailure;
  std::optional<synth::SynthesisCertificate<double>> certificate;
  int solver_iterations = 0;
  double solver_wall_seconds = 0.0;
  std::string solver_message;
};

struct VerificationRecord {
  bool ran = false;
  bool multiplier_search_pass = false;   // energy only
  double best_multiplier = 0.0;          // energy only
  double min_lambda_max = 0.0;           // energy only
  bool necessary_pass = false;           // instantaneous only
  double necessary_lambda_min = 0.0;     // instantaneous only
  synth::SamplingReport<double> sampling;
  double closed_loop_rho = 0.0;  // against the simulation-side plant
  bool pass = false;
};

struct RunRecord {
  RunConfig config;
  Eigen::MatrixXd plant_A;
  Eigen::MatrixXd plant_B;
  conset::DataMatrices<double> data;
  double theta = 0.0;         // per-step bound 2 e_x + e_u
  double theta_factor = 0.0;  // energy bound is theta_factor * I
  std::optional<CertificateRecord> energy;
  std::optional<CertificateRecord> instantaneous;
  std::optional<VerificationRecord> energy_verification;
  std::optional<VerificationRecord> inst_verification;
  double wall_seconds = 0.0;
};

namespace detail {

inline void write_certificate(std::ostringstream& os, const std::string& section,
                              const CertificateRecord& rec) {
  os << "\n[" << section << "]\n";
  os << "status = " << sdp::to_string(rec.status) << "\n";
  os << "solver_iterations = " << rec.solver_iterations << "\n";
  if (!rec.solver_message.empty()) os << "solver_message = " << rec.solver_message << "\n";
  if (rec.certificate) {
    os << "K = " << format_matrix(rec.certificate->K) << "\n";
    os << "P = " << format_matrix(rec.certificate->P) << "\n";
    os << "Y = " << format_matrix(rec.certificate->Y) << "\n";
    if (rec.certificate->taus.size() > 0)
      os << "taus = " << format_vector(rec.certificate->taus) << "\n";
    os << "margin_achieved = " << format_full(rec.certificate->margin_achieved) << "\n";
  }
}

inline void write_verification(std::ostringstream& os, const std::string& section,
                               const VerificationRecord& rec, bool energy_style) {
  os << "\n[" << section << "]\n";
  if (energy_style) {
    os << "multiplier_search = " << (rec.multiplier_search_pass ? "pass" : "fail") << "\n";
    os << "best_multiplier = " << format_full(rec.best_multiplier) << "\n";
    os << "min_lambda_max = " << format_full(rec.min_lambda_max) << "\n";
  } else {
    os << "necessary_condition = " << (rec.necessary_pass ? "pass" : "fail") << "\n";
    os << "necessary_lambda_min = " << format_full(rec.necessary_lambda_min) << "\n";
  }
  os << "sampling_checked = " << rec.sampling.checked << "\n";
  os << "sampling_requested = " << rec.sampling.requested << "\n";
  os << "sampling_starved = " << (rec.sampling.starved ? 1 : 0) << "\n";
  if (rec.sampling.checked > 0) {
    os << "worst_spectral_radius = " << format_full(rec.sampling.worst_spectral_radius) << "\n";
    os << "worst_lyapunov_gap = " << format_full(rec.sampling.worst_lyapunov_gap) << "\n";
  }
  os << "closed_loop_rho = " << format_full(rec.closed_loop_rho) << "\n";
  os << "verdict = " << (rec.pass ? "pass" : "fail") << "\n";
}

inline CertificateRecord read_certificate(const KeyValueFile& kv, const std::string& section,
                                          Eigen::Index horizon) {
  CertificateRecord rec;
  const std::string status = kv.get_string(section + ".status");
  if (status == "feasible")
    rec.status = sdp::SolveStatus::Feasible;
  else if (status == "infeasible")
    rec.status = sdp::SolveStatus::Infeasible;
  else
    rec.status = sdp::SolveStatus::NumericalFailure;
  rec.solver_iterations = static_cast<int>(kv.get_int_or(section + ".solver_iterations", 0));
  if (kv.has(section + ".K")) {
    synth::SynthesisCertificate<double> cert;
    cert.K = kv.get_matrix(section + ".K");
    cert.P = kv.get_matrix(section + ".P");
    cert.Y = kv.get_matrix(section + ".Y");
    if (kv.has(section + ".taus")) {
      cert.taus = kv.get_vector(section + ".taus");
      if (cert.taus.size() != horizon)
        throw InvalidInput("run record: multiplier count does not match the horizon");
    }
    cert.margin_achieved = kv.get_double_or(section + ".margin_achieved", 0.0);
    rec.certificate = std::move(cert);
  }
  return rec;
}

}  // namespace detail

inline std::string write_run_record(const RunRecord& rec, const std::string& command) {
  std::ostringstream os;
  os << "[meta]\n";
  os << "format = noisylmi-run/1\n";
  os << "command = " << command << "\n";
  os << "\n[timing]  # excluded from determinism comparisons\n";
  os << "wall_seconds = " << format_full(rec.wall_seconds) << "\n";

  // Config echo, namespaced under config.*.
  std::istringstream echo(rec.config.render());
  os << "\n";
  std::string line;
  while (std::getline(echo, line)) {
    if (!line.empty() && line.front() == '[')
      os << "[config." << line.substr(1) << "\n";
    else
      os << line << "\n";
  }

  os << "\n[plant]\n";
  os << "A = " << format_matrix(rec.plant_A) << "\n";
  os << "B = " << format_matrix(rec.plant_B) << "\n";

  os << "\n[data]\n";
  os << "n = " << rec.data.state_dim() << "\n";
  os << "m = " << rec.data.input_dim() << "\n";
  os << "T = " << rec.data.horizon() << "\n";
  const std::string x1 = format_matrix(rec.data.X1);
  const std::string x0 = format_matrix(rec.data.X0);
  const std::string u0 = format_matrix(rec.data.U0);
  os << "X1 = " << x1 << "\n";
  os << "X0 = " << x0 << "\n";
  os << "U0 = " << u0 << "\n";
  char digest[20];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(fnv1a64(x1 + x0 + u0)));
  os << "digest = " << digest << "\n";

  os << "\n[bound]\n";
  os << "mode = " << to_string(rec.config.mode) << "\n";
  os << "theta = " << format_full(rec.theta) << "\n";
  os << "theta_factor = " << format_full(rec.theta_factor) << "\n";

  if (rec.energy) detail::write_certificate(os, "certificate.energy", *rec.energy);
  if (rec.instantaneous)
    detail::write_certificate(os, "certificate.instantaneous", *rec.instantaneous);
  if (rec.energy_verification)
    detail::write_verification(os, "verification.energy", *rec.energy_verification, true);
  if (rec.inst_verification)
    detail::write_verification(os, "verification.instantaneous", *rec.inst_verification, false);
  return os.str();
}

/// Reads back the parts of a record needed to replay verification: data,
/// bounds, plant and certificates. Verification sections are not consumed.
inline RunRecord read_run_record(const std::string& text) {
  const KeyValueFile kv = KeyValueFile::parse(text);
  if (kv.get_string_or("meta.format", "") != "noisylmi-run/1")
    throw InvalidInput("not a noisylmi run record (missing format marker)");

  RunRecord rec;
  rec.data.X1 = kv.get_matrix("data.X1");
  rec.data.X0 = kv.get_matrix("data.X0");
  rec.data.U0 = kv.get_matrix("data.U0");
  rec.data.validate();
  const auto n = kv.get_int("data.n");
  const auto m = kv.get_int("data.m");
  const auto horizon = kv.get_int("data.T");
  if (n != rec.data.state_dim() || m != rec.data.input_dim() || horizon != rec.data.horizon())
    throw InvalidInput("run record: declared dimensions do not match the stored data");

  rec.plant_A = kv.get_matrix("plant.A");
  rec.plant_B = kv.get_matrix("plant.B");
  rec.theta = kv.get_double("bound.theta");
  rec.theta_factor = kv.get_double("bound.theta_factor");
  rec.config.mode = bound_mode_from_string(kv.get_string("bound.mode"));
  rec.config.verify.samples = kv.get_int_or("config.verify.samples", 500);
  rec.config.verify.seed = kv.get_seed_or("config.verify.seed", 1);
  rec.config.solver.feas_tol = kv.get_double_or("config.solver.feas_tol", 1e-8);
  rec.config.solver.margin = kv.get_double_or("config.solver.margin", 1e-6);

  if (kv.has("certificate.energy.status"))
    rec.energy = detail::read_certificate(kv, "certificate.energy", rec.data.horizon());
  if (kv.has("certificate.instantaneous.status"))
    rec.instantaneous = detail::read_certificate(kv, "certificate.instantaneous", rec.data.horizon());
  return rec;
}

}  // namespace noisylmi::cli
